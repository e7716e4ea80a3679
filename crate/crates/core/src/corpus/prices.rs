use std::sync::OnceLock;

use regex::Regex;

fn price_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?:[$€£]\s?)?\b(\d{1,3}(?:,\d{3})+|\d+)(\.\d+)?\b").expect("valid price regex"))
}

/// Every currency-marked or bare number in `text`, in order of appearance.
pub fn price_mentions(text: &str) -> Vec<f64> {
    price_regex()
        .captures_iter(text)
        .filter_map(|c| {
            let int = c[1].replace(',', "");
            let frac = c.get(2).map_or("", |m| m.as_str());
            format!("{int}{frac}").parse().ok()
        })
        .collect()
}

/// The price a turn quotes: its last mention.
pub fn turn_price(text: &str) -> Option<f64> {
    price_mentions(text).last().copied()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mentions() {
        assert_eq!(price_mentions("I can offer $40, or 45.50 at most"), vec![40.0, 45.5]);
        assert_eq!(price_mentions("$1,200 firm"), vec![1200.0]);
        assert!(price_mentions("no numbers here").is_empty());
        assert_eq!(turn_price("was 100, now 90"), Some(90.0));
        assert_eq!(turn_price("nothing"), None);
    }
}
