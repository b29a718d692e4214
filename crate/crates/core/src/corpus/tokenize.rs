const DETACHED: [char; 6] = ['.', ',', '!', '?', '\'', '"'];

/// Lowercases, splits on whitespace and detaches `. , ! ? ' "` as tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let mut cur = String::new();
        for c in word.chars().flat_map(char::to_lowercase) {
            if DETACHED.contains(&c) {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(c.to_string());
            } else {
                cur.push(c);
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(tokenize("I moved Right."), ["i", "moved", "right", "."]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("don't stop"), ["don", "'", "t", "stop"]);
        assert_eq!(tokenize("  \"Go!\"  now,ok "), ["\"", "go", "!", "\"", "now", ",", "ok"]);
    }

    proptest! {
        #[test]
        fn idempotent_on_joined_output(s in "[ a-zA-Z.,!?'\"\t]{0,60}") {
            let once = tokenize(&s);
            prop_assert_eq!(tokenize(&once.join(" ")), once);
        }
    }
}
