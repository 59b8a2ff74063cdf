//! `{...}` placeholder rendering used by labels, initial states and effects.

/// Replaces every `{token}` in `template` with `lookup(token)`.
///
/// Fails on an unterminated brace or a token the lookup does not know.
pub fn render<F>(template: &str, lookup: F) -> Result<String, String>
where
    F: Fn(&str) -> Option<String>,
{
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find('{') {
        out.push_str(&rest[..start]);
        let after = &rest[start + 1..];
        let end = after
            .find('}')
            .ok_or_else(|| format!("unterminated placeholder in {template:?}"))?;
        let token = &after[..end];
        let value = lookup(token).ok_or_else(|| format!("unknown placeholder {{{token}}}"))?;
        out.push_str(&value);
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Every `{token}` occurring in `template`, in order.
pub fn placeholders(template: &str) -> Vec<&str> {
    let mut found = Vec::new();
    let mut rest = template;
    while let Some(start) = rest.find('{') {
        let after = &rest[start + 1..];
        match after.find('}') {
            Some(end) => {
                found.push(&after[..end]);
                rest = &after[end + 1..];
            }
            None => break,
        }
    }
    found
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_and_rejects() {
        let f = |t: &str| (t == "a").then(|| "X".to_string());
        assert_eq!(render("p{a}q{a}", f).unwrap(), "pXqX");
        assert!(render("p{b}", f).is_err());
        assert!(render("p{a", f).is_err());
        assert_eq!(placeholders("{x} and {y:z}"), vec!["x", "y:z"]);
    }
}
