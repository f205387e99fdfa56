//! GSet-compatible text format.
//!
//! ```text
//! n m
//! u v w      (m lines, 1-indexed vertices, signed integer or decimal weight)
//! ```

use std::fmt::Write as _;

use super::Graph;
use crate::error::{Error, Result};

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

/// Parse a GSet file. Vertices are converted to 0-indexed.
pub fn parse_gset(text: &str) -> Result<Graph> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));

    let (hline, header) = lines
        .by_ref()
        .find(|(_, l)| !l.is_empty())
        .ok_or_else(|| parse_err(1, "missing header"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 2 {
        return Err(parse_err(hline, format!("header must be \"n m\", got {header:?}")));
    }
    let n: usize = fields[0]
        .parse()
        .map_err(|_| parse_err(hline, format!("invalid vertex count {:?}", fields[0])))?;
    let m: usize = fields[1]
        .parse()
        .map_err(|_| parse_err(hline, format!("invalid edge count {:?}", fields[1])))?;
    if n == 0 {
        return Err(parse_err(hline, "vertex count must be positive"));
    }

    let mut edges = Vec::with_capacity(m);
    let mut seen = std::collections::HashSet::with_capacity(m);
    let mut last_line = hline;
    for (lineno, line) in lines {
        last_line = lineno;
        if line.is_empty() {
            continue;
        }
        if edges.len() == m {
            return Err(parse_err(lineno, format!("more than the {m} edges declared in the header")));
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 3 {
            return Err(parse_err(lineno, format!("expected \"u v w\", got {line:?}")));
        }
        let vertex = |s: &str| -> Result<usize> {
            let x: usize = s
                .parse()
                .map_err(|_| parse_err(lineno, format!("invalid vertex index {s:?}")))?;
            if x == 0 || x > n {
                return Err(parse_err(lineno, format!("vertex index {x} outside [1, {n}]")));
            }
            Ok(x - 1)
        };
        let u = vertex(f[0])?;
        let v = vertex(f[1])?;
        let w: f64 = f[2]
            .parse()
            .map_err(|_| parse_err(lineno, format!("invalid weight {:?}", f[2])))?;
        if !w.is_finite() {
            return Err(parse_err(lineno, "non-finite weight"));
        }
        if u == v {
            return Err(parse_err(lineno, format!("self-loop on vertex {}", u + 1)));
        }
        if !seen.insert((u.min(v), u.max(v))) {
            return Err(parse_err(lineno, format!("duplicate edge ({}, {})", u + 1, v + 1)));
        }
        edges.push((u, v, w));
    }
    if edges.len() != m {
        return Err(parse_err(
            last_line,
            format!("header declares {m} edges but {} were found", edges.len()),
        ));
    }
    Graph::from_edges(n, &edges)
}

fn format_weight(w: f64) -> String {
    if w.fract() == 0.0 && w.abs() < 1e15 {
        format!("{}", w as i64)
    } else {
        // Display of f64 is the shortest string that parses back exactly.
        format!("{w}")
    }
}

/// Canonical text form: edges with `u < v` in lexicographic order.
pub fn serialize_graph(g: &Graph) -> String {
    let mut out = String::with_capacity(16 + 12 * g.num_edges());
    let _ = writeln!(out, "{} {}", g.num_vertices(), g.num_edges());
    for (u, v, w) in g.edges() {
        let _ = writeln!(out, "{} {} {}", u + 1, v + 1, format_weight(w));
    }
    out
}

pub fn deserialize_graph(text: &str) -> Result<Graph> {
    parse_gset(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{assign_signed_weights, generate_er};
    use proptest::prelude::*;

    #[test]
    fn parses_minimal_files() {
        let g = parse_gset("2 1\n1 2 1").unwrap();
        assert_eq!(g.num_vertices(), 2);
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1, 1.0)]);

        let g = parse_gset("3 2\n1 2 1\n2 3 -1\n").unwrap();
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1, 1.0), (1, 2, -1.0)]);
    }

    #[test]
    fn decimal_weights_and_crlf() {
        let g = parse_gset("3 2\r\n1 2 0.25\r\n3 1 -1.5\r\n").unwrap();
        assert_eq!(g.weight(0, 1), Some(0.25));
        assert_eq!(g.weight(0, 2), Some(-1.5));
    }

    fn err_line(text: &str) -> usize {
        match parse_gset(text) {
            Err(Error::Parse { line, .. }) => line,
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn errors_name_the_line() {
        assert_eq!(err_line(""), 1);
        assert_eq!(err_line("3\n"), 1);
        assert_eq!(err_line("x 1\n1 2 1"), 1);
        assert_eq!(err_line("3 2\n1 2 1\n2 4 1\n"), 3);
        assert_eq!(err_line("3 2\n1 2 1\n0 2 1\n"), 3);
        assert_eq!(err_line("3 2\n1 2 1\n2 1 1\n"), 3);
        assert_eq!(err_line("3 2\n1 1 1\n2 3 1\n"), 2);
        assert_eq!(err_line("3 2\n1 2 one\n"), 2);
        assert_eq!(err_line("3 2\n1 2\n"), 2);
        assert_eq!(err_line("3 1\n1 2 1\n2 3 1\n"), 3);
        assert_eq!(err_line("3 2\n1 2 1\n"), 2);
    }

    #[test]
    fn serializes_single_edge() {
        let g = Graph::from_edges(2, &[(0, 1, 1.0)]).unwrap();
        assert_eq!(serialize_graph(&g), "2 1\n1 2 1\n");
    }

    #[test]
    fn large_positive_instance_round_trip() {
        // GSet G1 dimensions: 800 vertices, positive unit weights, ~6% density.
        let g = generate_er(800, 0.06, 1).unwrap();
        let text = serialize_graph(&g);
        let back = deserialize_graph(&text).unwrap();
        assert_eq!(back.num_vertices(), 800);
        let mut a: Vec<_> = g.edges().map(|(u, v, w)| (u, v, w.to_bits())).collect();
        let mut b: Vec<_> = back.edges().map(|(u, v, w)| (u, v, w.to_bits())).collect();
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn round_trip(n in 2usize..40, p in 0.0f64..1.0, seed in any::<u64>(), scale in prop::sample::select(vec![1.0, 0.1, 3.7, -2.25e-3])) {
            let g = assign_signed_weights(&generate_er(n, p, seed).unwrap(), seed);
            let edges: Vec<_> = g.edges().map(|(u, v, w)| (u, v, w * scale)).collect();
            let g = Graph::from_edges(n, &edges).unwrap();
            prop_assert_eq!(deserialize_graph(&serialize_graph(&g)).unwrap(), g);
        }
    }
}
