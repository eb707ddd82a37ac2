use std::collections::VecDeque;
use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::numcore::Tensor;

pub const DEFAULT_JOINTS: [&str; 8] = [
    "root", "spine", "head", "l_arm", "l_hand", "r_arm", "r_hand", "leg",
];

/// root-spine-head, spine-arm-hand on both sides, root-leg.
pub const DEFAULT_EDGES: [(usize, usize); 7] = [(0, 1), (1, 2), (1, 3), (3, 4), (1, 5), (5, 6), (0, 7)];

#[derive(Clone, Debug)]
pub struct SkeletonGraph {
    pub joints: usize,
    pub edges: Vec<(usize, usize)>,
    /// `D^{-1/2} (A + I) D^{-1/2}`, `[M, M]`.
    pub a_hat: Tensor,
}

pub fn skeleton_adjacency(joints: usize, edges: &[(usize, usize)]) -> Result<SkeletonGraph> {
    if joints == 0 {
        return Err(invalid!("skeleton needs at least one joint"));
    }
    let mut adj = vec![0.0; joints * joints];
    let mut nbrs = vec![Vec::new(); joints];
    for &(a, b) in edges {
        if a >= joints || b >= joints {
            return Err(invalid!("edge ({a}, {b}) out of range for {joints} joints"));
        }
        if a != b {
            adj[a * joints + b] = 1.0;
            adj[b * joints + a] = 1.0;
            nbrs[a].push(b);
            nbrs[b].push(a);
        }
    }
    let mut seen = vec![false; joints];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(v) = queue.pop_front() {
        for &u in &nbrs[v] {
            if !seen[u] {
                seen[u] = true;
                queue.push_back(u);
            }
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(invalid!("skeleton is disconnected: joint {missing} unreachable from 0"));
    }
    for i in 0..joints {
        adj[i * joints + i] = 1.0;
    }
    let deg: Vec<f64> = (0..joints)
        .map(|i| adj[i * joints..(i + 1) * joints].iter().sum::<f64>())
        .collect();
    for i in 0..joints {
        for j in 0..joints {
            adj[i * joints + j] /= (deg[i] * deg[j]).sqrt();
        }
    }
    Ok(SkeletonGraph {
        joints,
        edges: edges.to_vec(),
        a_hat: Tensor::new(&[joints, joints], adj)?,
    })
}

/// The 8-joint tree for `M = 8`, a root-to-tip chain otherwise.
pub fn default_skeleton(joints: usize) -> Result<SkeletonGraph> {
    if joints == DEFAULT_JOINTS.len() {
        skeleton_adjacency(joints, &DEFAULT_EDGES)
    } else {
        let chain: Vec<_> = (1..joints).map(|j| (j - 1, j)).collect();
        skeleton_adjacency(joints, &chain)
    }
}

/// One `a b` pair per line; blank lines and `#` comments are skipped.
pub fn load_edges(path: &Path) -> Result<Vec<(usize, usize)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut edges = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::Parse(format!("{}:{}: bad joint index `{s}`", path.display(), no + 1)))
        };
        if parts.len() != 2 {
            return Err(Error::Parse(format!("{}:{}: expected `a b`", path.display(), no + 1)));
        }
        edges.push((parse(parts[0])?, parse(parts[1])?));
    }
    Ok(edges)
}

pub fn save_edges(path: &Path, edges: &[(usize, usize)]) -> Result<()> {
    let text: String = edges.iter().map(|(a, b)| format!("{a} {b}\n")).collect();
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
