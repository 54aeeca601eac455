//! Canonical tokenizer shared by statistics and feature extraction.

/// Sentinel emitted for a markdown quote marker at the start of a line.
pub const QUOTE: &str = "QUOTE";
/// Sentinel emitted in place of a URL.
pub const URL: &str = "URL";

const URL_PREFIXES: [&str; 3] = ["http://", "https://", "www."];

/// Lowercased alphanumeric runs, with `QUOTE` and `URL` sentinels.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in text.lines() {
        let mut rest = line.trim_start();
        let mut quoted = false;
        loop {
            if let Some(r) = rest.strip_prefix('>') {
                rest = r.trim_start();
            } else if let Some(r) = rest.strip_prefix("&gt;") {
                rest = r.trim_start();
            } else {
                break;
            }
            quoted = true;
        }
        if quoted {
            out.push(QUOTE.to_owned());
        }
        for chunk in rest.split_whitespace() {
            let lower = chunk.to_ascii_lowercase();
            let url_at = URL_PREFIXES.iter().filter_map(|p| lower.find(p)).min();
            let words = match url_at {
                Some(at) => &chunk[..at],
                None => chunk,
            };
            out.extend(
                words
                    .split(|c: char| !c.is_alphanumeric())
                    .filter(|w| !w.is_empty())
                    .map(str::to_lowercase),
            );
            if url_at.is_some() {
                out.push(URL.to_owned());
            }
        }
    }
    out
}
