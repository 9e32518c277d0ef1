//! Line-oriented output in the two supported formats.

use std::io::Write;

use clap::ValueEnum;
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    /// Tab-separated fields, one record per line.
    #[default]
    Plain,
    /// One compact JSON value per line.
    Structured,
}

#[derive(Debug, Clone, Copy)]
pub struct Out {
    pub format: Format,
}

impl Out {
    /// Writes one record: `fields` in plain mode, `value` in structured mode.
    pub fn emit<S: AsRef<str>>(&self, fields: &[S], value: &Value) {
        let line = match self.format {
            Format::Plain => fields
                .iter()
                .map(|f| plain_field(f.as_ref()))
                .collect::<Vec<_>>()
                .join("\t"),
            Format::Structured => value.to_string(),
        };
        let mut stdout = std::io::stdout().lock();
        // A closed pipe is the reader's choice; nothing useful to report.
        let _ = writeln!(stdout, "{line}");
        let _ = stdout.flush();
    }
}

/// Keeps a field on one line and free of separators.
pub fn plain_field(s: &str) -> String {
    if s.is_empty() {
        return "-".into();
    }
    s.chars().map(|c| if c.is_control() { ' ' } else { c }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_fields_stay_on_one_line() {
        assert_eq!(plain_field("a\tb\nc"), "a b c");
        assert_eq!(plain_field(""), "-");
        assert_eq!(plain_field("čšž"), "čšž");
    }
}
