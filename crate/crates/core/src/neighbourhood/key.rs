use serde::{Deserialize, Serialize};

/// Per-field transform applied before a value enters a blocking key.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Transform {
    Identity,
    /// Characters `[start, start + len)`, clipped to the value.
    Substring {
        start: usize,
        len: usize,
    },
    Soundex,
    Lowercase,
}

impl Transform {
    pub fn apply(&self, value: &str) -> String {
        match self {
            Transform::Identity => value.to_string(),
            Transform::Substring { start, len } => value.chars().skip(*start).take(*len).collect(),
            Transform::Soundex => soundex(value),
            Transform::Lowercase => value.to_lowercase(),
        }
    }
}

/// One component of a blocking key: a field passed through a chain of
/// transforms. Key parts are concatenated in order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyPart {
    pub field: usize,
    #[serde(default)]
    pub transforms: Vec<Transform>,
}

impl KeyPart {
    pub fn field(field: usize) -> Self {
        Self {
            field,
            transforms: Vec::new(),
        }
    }

    pub fn with(mut self, t: Transform) -> Self {
        self.transforms.push(t);
        self
    }

    pub fn apply(&self, record: &[String]) -> String {
        let mut v = record[self.field].clone();
        for t in &self.transforms {
            v = t.apply(&v);
        }
        v
    }
}

fn soundex_digit(c: char) -> Option<char> {
    Some(match c {
        'B' | 'F' | 'P' | 'V' => '1',
        'C' | 'G' | 'J' | 'K' | 'Q' | 'S' | 'X' | 'Z' => '2',
        'D' | 'T' => '3',
        'L' => '4',
        'M' | 'N' => '5',
        'R' => '6',
        _ => return None,
    })
}

/// American Soundex: first letter plus three digits, zero padded. Letters
/// with the same code separated by H or W collapse; vowels break runs.
/// Non-letters are ignored and an input without letters maps to "".
pub fn soundex(value: &str) -> String {
    let mut letters = value
        .chars()
        .filter(char::is_ascii_alphabetic)
        .map(|c| c.to_ascii_uppercase());
    let Some(first) = letters.next() else {
        return String::new();
    };
    let mut out = String::with_capacity(4);
    out.push(first);
    let mut last = soundex_digit(first);
    for c in letters {
        if out.len() == 4 {
            break;
        }
        match soundex_digit(c) {
            Some(d) => {
                if last != Some(d) {
                    out.push(d);
                }
                last = Some(d);
            }
            None if c == 'H' || c == 'W' => {}
            None => last = None,
        }
    }
    while out.len() < 4 {
        out.push('0');
    }
    out
}
