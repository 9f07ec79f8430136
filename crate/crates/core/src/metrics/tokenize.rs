//! The `13a` tokenizer used by mteval-v13a and SacreBLEU.

use std::sync::OnceLock;

use regex::Regex;

struct Rules {
    punct: Regex,
    period_comma_after_non_digit: Regex,
    period_comma_before_non_digit: Regex,
    dash_after_digit: Regex,
}

fn rules() -> &'static Rules {
    static RULES: OnceLock<Rules> = OnceLock::new();
    RULES.get_or_init(|| Rules {
        // { | } ~  [ \ ] ^ _ `  space ! " # $ % &  ( ) * +  : ; < = > ? @  /
        punct: Regex::new(r"([\x7B-\x7E\x5B-\x60\x20-\x26\x28-\x2B\x3A-\x40\x2F])").unwrap(),
        period_comma_after_non_digit: Regex::new(r"([^0-9])([\.,])").unwrap(),
        period_comma_before_non_digit: Regex::new(r"([\.,])([^0-9])").unwrap(),
        dash_after_digit: Regex::new(r"([0-9])(-)").unwrap(),
    })
}

/// Tokenize with the mteval-v13a rules. Case is preserved.
pub fn tokenize_13a(text: &str) -> Vec<String> {
    let mut line = text
        .replace("<skipped>", "")
        .replace("-\n", "")
        .replace('\n', " ");
    if line.contains('&') {
        line = line
            .replace("&quot;", "\"")
            .replace("&amp;", "&")
            .replace("&lt;", "<")
            .replace("&gt;", ">");
    }
    let r = rules();
    let line = format!(" {line} ");
    let line = r.punct.replace_all(&line, " ${1} ");
    let line = r
        .period_comma_after_non_digit
        .replace_all(&line, "${1} ${2} ");
    let line = r
        .period_comma_before_non_digit
        .replace_all(&line, " ${1} ${2}");
    let line = r.dash_after_digit.replace_all(&line, "${1} ${2} ");
    line.split_whitespace().map(str::to_string).collect()
}

#[cfg(test)]
mod tests {
    use super::tokenize_13a;

    fn tok(s: &str) -> Vec<String> {
        tokenize_13a(s)
    }

    #[test]
    fn basic_cases() {
        assert_eq!(tok("Hello, world!"), ["Hello", ",", "world", "!"]);
        assert_eq!(tok("abc"), ["abc"]);
        assert_eq!(tok("a  b"), ["a", "b"]);
        assert!(tok("").is_empty());
    }

    #[test]
    fn numbers_and_entities() {
        assert_eq!(
            tok("It costs 3.50, or 1,000."),
            ["It", "costs", "3.50", ",", "or", "1,000", "."]
        );
        assert_eq!(tok("1990-2000"), ["1990", "-", "2000"]);
        assert_eq!(tok("well-known"), ["well-known"]);
        assert_eq!(
            tok("a &amp; b &quot;c&quot;"),
            ["a", "&", "b", "\"", "c", "\""]
        );
        assert_eq!(tok("don't"), ["don't"]);
    }
}
