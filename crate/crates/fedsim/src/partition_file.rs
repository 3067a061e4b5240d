//! Partition files: a `m=<int> n=<int>` header, then one
//! `sample_index,client_id` line per sample.

use std::fmt::Write as _;
use std::path::Path;

use fedspeed_core::partition::Partition;

use crate::error::{FedsimError, Result};

pub fn format_partition(partition: &Partition) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "m={} n={}", partition.num_clients(), partition.num_samples());
    for (i, c) in partition.assignment().iter().enumerate() {
        let _ = writeln!(out, "{i},{c}");
    }
    out
}

pub fn write_partition(path: &Path, partition: &Partition) -> Result<()> {
    std::fs::write(path, format_partition(partition)).map_err(|e| FedsimError::io(path, e))
}

pub fn read_partition(path: &Path) -> Result<Partition> {
    let text = std::fs::read_to_string(path).map_err(|e| FedsimError::io(path, e))?;
    parse_partition(&text).map_err(|(row, message)| FedsimError::Parse {
        path: path.to_path_buf(),
        row,
        message,
    })
}

/// Parses partition text; errors are `(line, message)`.
pub fn parse_partition(text: &str) -> std::result::Result<Partition, (usize, String)> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or((1, "missing `m=<int> n=<int>` header".to_string()))?;
    let mut m = None;
    let mut n = None;
    for field in header.split_whitespace() {
        match field.split_once('=') {
            Some(("m", v)) => m = v.parse::<usize>().ok(),
            Some(("n", v)) => n = v.parse::<usize>().ok(),
            _ => return Err((1, format!("unexpected header field `{field}`"))),
        }
    }
    let (m, n) = match (m, n) {
        (Some(m), Some(n)) => (m, n),
        _ => return Err((1, "header must be `m=<int> n=<int>`".into())),
    };
    let mut assignment = vec![usize::MAX; n];
    let mut seen = 0usize;
    for (i, line) in lines {
        let row = i + 1;
        let (s, c) = line
            .split_once(',')
            .ok_or((row, "expected `sample_index,client_id`".to_string()))?;
        let s: usize = s.trim().parse().map_err(|_| (row, format!("bad sample index `{s}`")))?;
        let c: usize = c.trim().parse().map_err(|_| (row, format!("bad client id `{c}`")))?;
        if s >= n {
            return Err((row, format!("sample {s} out of range for n={n}")));
        }
        if c >= m {
            return Err((row, format!("client {c} out of range for m={m}")));
        }
        if assignment[s] != usize::MAX {
            return Err((row, format!("sample {s} assigned twice")));
        }
        assignment[s] = c;
        seen += 1;
    }
    if seen != n {
        let missing = assignment.iter().position(|&c| c == usize::MAX).unwrap_or(0);
        return Err((1, format!("sample {missing} is not assigned")));
    }
    Partition::new(assignment, m).map_err(|e| (1, e.to_string()))
}

/// Client × class count table: header `client,class_0,…`, one row per client.
pub fn format_counts(counts: &[Vec<usize>]) -> String {
    let classes = counts.first().map_or(0, Vec::len);
    let mut out = String::from("client");
    for c in 0..classes {
        let _ = write!(out, ",class_{c}");
    }
    out.push('\n');
    for (i, row) in counts.iter().enumerate() {
        let _ = write!(out, "{i}");
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let p = Partition::new(vec![2, 0, 1, 1, 0], 3).unwrap();
        let text = format_partition(&p);
        assert!(text.starts_with("m=3 n=5\n0,2\n"));
        assert_eq!(parse_partition(&text).unwrap(), p);
    }

    #[test]
    fn rejects_malformed_files() {
        for (text, row) in [
            ("", 1),
            ("m=2\n0,0\n", 1),
            ("m=2 n=2\n0,0\n0,1\n", 3),
            ("m=2 n=2\n0,0\n1,5\n", 3),
            ("m=2 n=2\n0,0\n", 1),
            ("m=2 n=2\n0,0\n1;1\n", 3),
            ("m=2 n=2\n0,0\n1,0\n", 1), // client 1 empty
        ] {
            assert_eq!(parse_partition(text).unwrap_err().0, row, "{text:?}");
        }
    }

    #[test]
    fn counts_table() {
        let t = format_counts(&[vec![1, 0], vec![2, 3]]);
        assert_eq!(t, "client,class_0,class_1\n0,1,0\n1,2,3\n");
    }
}
