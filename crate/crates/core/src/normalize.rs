/// Lowercase, trim and collapse internal whitespace runs to one space.
///
/// Used for title entities, section titles, KB values and NP surfaces alike,
/// so that every string comparison in the pipeline goes through one rule.
pub fn normalize(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for word in s.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.chars().flat_map(char::to_lowercase));
    }
    out
}
