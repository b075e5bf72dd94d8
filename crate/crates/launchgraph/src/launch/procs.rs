use std::fs;

/// Pids of live processes whose parent is this process, from a scan of
/// `/proc`. Zombies count: they still occupy the process table.
pub fn child_processes() -> Vec<u32> {
    let me = std::process::id();
    let Ok(entries) = fs::read_dir("/proc") else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for entry in entries.flatten() {
        let Some(pid) = entry.file_name().to_str().and_then(|s| s.parse::<u32>().ok()) else {
            continue;
        };
        let Ok(stat) = fs::read_to_string(entry.path().join("stat")) else {
            continue;
        };
        if parent_of(&stat) == Some(me) {
            out.push(pid);
        }
    }
    out.sort_unstable();
    out
}

/// Field 4 of `/proc/<pid>/stat`. The command name in field 2 may contain
/// spaces and parentheses, so parsing starts after its last `)`.
fn parent_of(stat: &str) -> Option<u32> {
    let rest = &stat[stat.rfind(')')? + 1..];
    let mut fields = rest.split_whitespace();
    let _state = fields.next()?;
    fields.next()?.parse().ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_names_with_parens() {
        assert_eq!(parent_of("42 (a) b)) S 17 42 42 0"), Some(17));
        assert_eq!(parent_of("garbage"), None);
    }

    #[test]
    fn sees_a_spawned_child() {
        let mut child = std::process::Command::new("sleep").arg("5").spawn().unwrap();
        assert!(child_processes().contains(&child.id()));
        child.kill().unwrap();
        child.wait().unwrap();
        assert!(!child_processes().contains(&child.id()));
    }
}
