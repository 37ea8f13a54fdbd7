//! OFF mesh parsing (the ModelNet distribution format): an `OFF` header,
//! vertex/face/edge counts, vertex coordinates, then polygon faces that are
//! fan-triangulated here.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

use super::Mesh;

/// Parses OFF text into a triangle [`Mesh`].
///
/// Tolerates the header variants found in the wild: counts on the same line
/// as `OFF` or on the next one, `#` comments, and blank lines. Faces with
/// more than 3 vertices split into a fan anchored at the first vertex.
pub fn parse_off<S: Scalar>(text: &str) -> Result<Mesh<S>> {
    let mut tokens = text.lines().flat_map(|line| {
        let content = line.split('#').next().unwrap_or("");
        content.split_whitespace()
    });

    let header = tokens.next().ok_or_else(|| Error::Format("empty OFF file".into()))?;
    // Some exporters glue the first count to the keyword ("OFF490"); peel it
    // off so those files still parse.
    let glued_count = if header.eq_ignore_ascii_case("OFF") {
        None
    } else if header.len() > 3 && header[..3].eq_ignore_ascii_case("OFF") {
        Some(header[3..].parse::<usize>().map_err(|_| {
            Error::Format(format!("missing OFF header (found '{header}')"))
        })?)
    } else {
        return Err(Error::Format(format!(
            "missing OFF header (found '{header}')"
        )));
    };

    let next_usize = |what: &str, tokens: &mut dyn Iterator<Item = &str>| -> Result<usize> {
        let t = tokens
            .next()
            .ok_or_else(|| Error::Format(format!("OFF truncated before {what}")))?;
        t.parse::<usize>()
            .map_err(|_| Error::Format(format!("bad {what} '{t}' in OFF")))
    };

    let n_vertices = match glued_count {
        Some(n) => n,
        None => next_usize("vertex count", &mut tokens)?,
    };
    let n_faces = next_usize("face count", &mut tokens)?;
    let _n_edges = next_usize("edge count", &mut tokens)?;

    let mut vertices = Matrix::zeros(n_vertices, 3);
    for v in 0..n_vertices {
        for axis in 0..3 {
            let t = tokens
                .next()
                .ok_or_else(|| Error::Format(format!("OFF truncated in vertex {v}")))?;
            let x: f64 = t
                .parse()
                .map_err(|_| Error::Format(format!("bad coordinate '{t}' in OFF")))?;
            if !x.is_finite() {
                return Err(Error::Format(format!("non-finite coordinate in vertex {v}")));
            }
            vertices.set(v, axis, S::cast(x));
        }
    }

    let mut faces = Vec::with_capacity(n_faces);
    for f in 0..n_faces {
        let k = next_usize("face arity", &mut tokens)?;
        if k < 3 {
            return Err(Error::Format(format!("face {f} has {k} vertices (< 3)")));
        }
        let mut idx = Vec::with_capacity(k);
        for _ in 0..k {
            let i = next_usize("face index", &mut tokens)?;
            if i >= n_vertices {
                return Err(Error::Format(format!(
                    "face {f} references vertex {i} of {n_vertices}"
                )));
            }
            idx.push(i);
        }
        for t in 1..k - 1 {
            faces.push([idx[0], idx[t], idx[t + 1]]);
        }
    }

    Mesh::new(vertices, faces)
}
