//! Rooted-tree well geometry: nodes, oriented edges, per-branch meshing and
//! incidence bookkeeping. Edges are oriented away from the root (drilling
//! direction); the flux sign convention is positive from child to parent.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }
    fn dist(&self, o: &Point) -> f64 {
        ((self.x - o.x).powi(2) + (self.y - o.y).powi(2) + (self.z - o.z).powi(2)).sqrt()
    }
    fn lerp(&self, o: &Point, w: f64) -> Point {
        Point {
            x: self.x + (o.x - self.x) * w,
            y: self.y + (o.y - self.y) * w,
            z: self.z + (o.z - self.z) * w,
        }
    }
}

#[derive(Clone, Debug)]
pub struct WellNode {
    pub pos: Point,
    /// Edge to the parent; `None` for the root.
    pub parent_edge: Option<usize>,
    /// Branch the node belongs to (its parent edge's branch; 0 for the root).
    pub branch: usize,
    /// Arc length along that branch, m.
    pub arc: f64,
    pub is_leaf: bool,
}

impl WellNode {
    pub fn is_root(&self) -> bool {
        self.parent_edge.is_none()
    }
}

#[derive(Clone, Debug)]
pub struct WellEdge {
    /// Parent node (closer to the root).
    pub parent: usize,
    /// Child node.
    pub child: usize,
    pub branch: usize,
    /// m
    pub length: f64,
    /// m
    pub radius: f64,
    /// Cross-section pi r^2, m^2.
    pub section: f64,
    /// Angle to the vertical, [0, pi/2].
    pub theta: f64,
    /// Orientation sign toward the root.
    pub epsilon: f64,
    /// Shi-closure orientation factor eps cos(theta)^(1/2) (1 + sin theta)^2.
    pub orientation: f64,
}

/// Orientation factor of an edge with angle `theta` to the vertical.
/// Horizontal edges get exactly zero.
pub fn edge_orientation(epsilon: f64, theta: f64) -> f64 {
    let c = theta.cos();
    let c = if c.abs() < 1e-12 { 0.0 } else { c.max(0.0) };
    epsilon * c.sqrt() * (1.0 + theta.sin()).powi(2)
}

/// Branch specification: straight segment subdivided uniformly.
#[derive(Clone, Debug)]
pub struct BranchSpec {
    pub from: Point,
    pub to: Point,
    pub segments: usize,
    pub radius: f64,
}

/// Rooted well tree. Nodes are numbered in depth-first order from the root,
/// visiting smaller subtrees first to keep the Jacobian bandwidth small.
#[derive(Clone, Debug)]
pub struct WellMesh {
    pub nodes: Vec<WellNode>,
    pub edges: Vec<WellEdge>,
    /// Incident edges per node.
    pub incident: Vec<Vec<usize>>,
    /// Section used for the head-node outflow: the section of the edge
    /// incident to the root.
    pub head_section: f64,
    /// Per-node control volume sum_a |S_a| |a| / 2, m^3.
    pub volume: Vec<f64>,
}

impl WellMesh {
    pub fn root(&self) -> usize {
        0
    }

    /// Incidence sign: +1 at the parent node, -1 at the child.
    pub fn kappa(&self, edge: usize, node: usize) -> f64 {
        if self.edges[edge].parent == node {
            1.0
        } else {
            debug_assert_eq!(self.edges[edge].child, node);
            -1.0
        }
    }

    pub fn leaves(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&v| self.nodes[v].is_leaf).collect()
    }

    /// The other endpoint of `edge` as seen from `node`.
    pub fn opposite(&self, edge: usize, node: usize) -> usize {
        let e = &self.edges[edge];
        if e.parent == node {
            e.child
        } else {
            e.parent
        }
    }

    pub fn total_volume(&self) -> f64 {
        self.edges.iter().map(|e| e.section * e.length).sum()
    }

    /// Largest index jump across an edge, which bounds the Jacobian bandwidth.
    pub fn max_index_jump(&self) -> usize {
        self.edges
            .iter()
            .map(|e| e.parent.abs_diff(e.child))
            .max()
            .unwrap_or(0)
    }

    /// True if `ancestor` lies on the path from the root to `node`.
    pub fn is_ancestor(&self, ancestor: usize, node: usize) -> bool {
        let mut v = node;
        loop {
            if v == ancestor {
                return true;
            }
            match self.nodes[v].parent_edge {
                Some(e) => v = self.edges[e].parent,
                None => return false,
            }
        }
    }

    /// Path length from the root to `node`, m.
    pub fn depth_along_path(&self, node: usize) -> f64 {
        let mut v = node;
        let mut d = 0.0;
        while let Some(e) = self.nodes[v].parent_edge {
            d += self.edges[e].length;
            v = self.edges[e].parent;
        }
        d
    }

    /// Node on `branch` closest to the requested arc length.
    pub fn node_at_arc(&self, branch: usize, arc: f64) -> Option<usize> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.branch == branch)
            .min_by(|a, b| {
                (a.1.arc - arc)
                    .abs()
                    .partial_cmp(&(b.1.arc - arc).abs())
                    .unwrap()
            })
            .map(|(i, _)| i)
    }

    /// Last node of `branch` (largest arc length).
    pub fn branch_end(&self, branch: usize) -> Option<usize> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.branch == branch)
            .max_by(|a, b| a.1.arc.partial_cmp(&b.1.arc).unwrap())
            .map(|(i, _)| i)
    }
}

const WELD_TOL: f64 = 1e-6;

/// Build a well mesh from branch specs. Every branch's `from` endpoint must
/// coincide with the root or with a node created by an earlier branch.
pub fn build_well_mesh(root: Point, branches: &[BranchSpec]) -> Result<WellMesh> {
    struct RawNode {
        pos: Point,
        parent: Option<(usize, usize)>, // (parent raw node, branch)
        branch: usize,
        arc: f64,
    }
    let mut raw: Vec<RawNode> = vec![RawNode {
        pos: root,
        parent: None,
        branch: 0,
        arc: 0.0,
    }];

    let find = |raw: &[RawNode], p: &Point| -> Option<usize> {
        raw.iter().position(|n| n.pos.dist(p) <= WELD_TOL)
    };

    for (b, spec) in branches.iter().enumerate() {
        if spec.segments == 0 {
            return Err(Error::Geometry(format!("branch {b} has zero segments")));
        }
        let total = spec.from.dist(&spec.to);
        if total <= 0.0 {
            return Err(Error::Geometry(format!("branch {b} has zero length")));
        }
        let start = find(&raw, &spec.from).ok_or_else(|| {
            Error::Geometry(format!(
                "branch {b} start ({}, {}, {}) does not connect to the tree",
                spec.from.x, spec.from.y, spec.from.z
            ))
        })?;
        let mut prev = start;
        for k in 1..=spec.segments {
            let pos = spec.from.lerp(&spec.to, k as f64 / spec.segments as f64);
            if find(&raw, &pos).is_some() {
                return Err(Error::Geometry(format!(
                    "branch {b} node {k} coincides with an existing node (cycle or duplicate)"
                )));
            }
            raw.push(RawNode {
                pos,
                parent: Some((prev, b)),
                branch: b,
                arc: total * k as f64 / spec.segments as f64,
            });
            prev = raw.len() - 1;
        }
    }

    // children lists, then DFS with smaller subtrees first
    let n = raw.len();
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, node) in raw.iter().enumerate() {
        if let Some((p, _)) = node.parent {
            children[p].push(i);
        }
    }
    let mut subtree = vec![1usize; n];
    for i in (0..n).rev() {
        // raw indices are topologically ordered (parents precede children)
        if let Some((p, _)) = raw[i].parent {
            subtree[p] += subtree[i];
        }
    }
    for c in &mut children {
        c.sort_by_key(|&i| subtree[i]);
    }
    let mut order = Vec::with_capacity(n);
    let mut stack = vec![0usize];
    while let Some(i) = stack.pop() {
        order.push(i);
        for &c in children[i].iter().rev() {
            stack.push(c);
        }
    }
    if order.len() != n {
        return Err(Error::Geometry("well graph is not a connected tree".into()));
    }
    let mut new_index = vec![0usize; n];
    for (new, &old) in order.iter().enumerate() {
        new_index[old] = new;
    }

    let mut nodes: Vec<WellNode> = order
        .iter()
        .map(|&old| WellNode {
            pos: raw[old].pos,
            parent_edge: None,
            branch: raw[old].branch,
            arc: raw[old].arc,
            is_leaf: children[old].is_empty(),
        })
        .collect();

    let mut edges = Vec::with_capacity(n - 1);
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &old in &order {
        if let Some((p_old, branch)) = raw[old].parent {
            let parent = new_index[p_old];
            let child = new_index[old];
            let a = &nodes[parent].pos.clone();
            let b = &nodes[child].pos.clone();
            let length = a.dist(b);
            let dz = a.z - b.z; // parent minus child along e_tau (toward root)
            let cos_t = (dz.abs() / length).min(1.0);
            let theta = cos_t.acos();
            let epsilon = if dz >= 0.0 { 1.0 } else { -1.0 };
            let radius = branches[branch].radius;
            let e = WellEdge {
                parent,
                child,
                branch,
                length,
                radius,
                section: std::f64::consts::PI * radius * radius,
                theta,
                epsilon,
                orientation: edge_orientation(epsilon, theta),
            };
            let id = edges.len();
            incident[parent].push(id);
            incident[child].push(id);
            nodes[child].parent_edge = Some(id);
            edges.push(e);
        }
    }

    let head_section = incident[0]
        .first()
        .map(|&e| edges[e].section)
        .ok_or_else(|| Error::Geometry("root has no incident edge".into()))?;

    let mut volume = vec![0.0; n];
    for e in &edges {
        let half = 0.5 * e.section * e.length;
        volume[e.parent] += half;
        volume[e.child] += half;
    }

    Ok(WellMesh {
        nodes,
        edges,
        incident,
        head_section,
        volume,
    })
}

/// A single vertical branch from `(0,0,0)` down to depth `h`, the standard
/// standalone test geometry.
pub fn vertical_well(depth: f64, segments: usize, radius: f64) -> Result<WellMesh> {
    build_well_mesh(
        Point::new(0.0, 0.0, 0.0),
        &[BranchSpec {
            from: Point::new(0.0, 0.0, 0.0),
            to: Point::new(0.0, 0.0, -depth),
            segments,
            radius,
        }],
    )
}

#[cfg(test)]
pub fn chair_mesh() -> WellMesh {
    let r = 0.05;
    build_well_mesh(
        Point::new(0.0, 0.0, 0.0),
        &[
            BranchSpec {
                from: Point::new(0.0, 0.0, 0.0),
                to: Point::new(0.0, 0.0, -600.0),
                segments: 60,
                radius: r,
            },
            BranchSpec {
                from: Point::new(0.0, 0.0, -600.0),
                to: Point::new(0.0, 0.0, -1000.0),
                segments: 40,
                radius: r,
            },
            BranchSpec {
                from: Point::new(0.0, 0.0, -600.0),
                to: Point::new(400.0, 0.0, -600.0),
                segments: 40,
                radius: r,
            },
            BranchSpec {
                from: Point::new(400.0, 0.0, -600.0),
                to: Point::new(400.0, 0.0, -1000.0),
                segments: 40,
                radius: r,
            },
        ],
    )
    .unwrap()
}
