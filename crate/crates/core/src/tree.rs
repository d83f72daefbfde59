//! Geometric coding trees: base curves from a root to its preimages, and
//! all their lifts indexed by finite words.
//!
//! For a word `a = (a_0, a_1, ...)` the edge `gamma_0(a)` is the base curve
//! numbered `a_0`; `gamma_n(a)` is the lift of `gamma_{n-1}(shift a)` that
//! starts at `z_{n-1}(a)`, and `z_n(a)` is its endpoint. Edges depend only on
//! `(a_0..a_n)` and are memoized under that key.

use std::io::Write;
use std::sync::Arc;

use dashmap::DashMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lifting::{lift_curve, preimages, InverseBranch, LiftOptions, Polyline};
use crate::map::RationalMap;
use crate::sphere::{chordal_distance, SpherePoint};
use crate::word::{format_symbols, SymbolWord};

/// Largest number of edges a full build may create.
pub const FULL_EDGE_CAP: usize = 1_000_000;

/// Edges deeper than this many levels below the base are thinned.
const DECIMATE_FROM_LEVEL: usize = 2;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TreeOptions {
    pub lift: LiftOptions,
    /// Thinned edges keep at least this many points.
    pub min_edge_points: usize,
    /// Ratio cap of the geometric tail estimator.
    pub ratio_cap: f64,
    /// Edges in a row at the ratio cap before convergence counts as slow.
    pub slow_run: usize,
}

impl Default for TreeOptions {
    fn default() -> Self {
        Self {
            lift: LiftOptions::default(),
            min_edge_points: 32,
            ratio_cap: 0.9,
            slow_run: 10,
        }
    }
}

#[derive(Clone, Debug)]
pub enum BuildMode {
    /// Every word up to the tree depth.
    Full,
    /// Only the listed words (their prefixes up to the depth) and ancestors.
    Prefixes(Vec<SymbolWord>),
}

/// Statistics of the branch of a word beyond vertex `z_m`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BranchTail {
    pub word: SymbolWord,
    pub from_depth: usize,
    /// Sum of the edge lengths `gamma_k`, `k > m`.
    pub tail_length: f64,
    /// Chordal diameter of the vertices `z_k`, `k >= m`.
    pub tail_diameter: f64,
}

/// A coding tree. Edges not yet built are computed on demand and cached, so
/// the tree can be deepened along any word; `depth` bounds what counts as
/// available for tail statistics.
pub struct CodingTree {
    map: RationalMap,
    root: SpherePoint,
    base_curves: Vec<Polyline>,
    depth: usize,
    opts: TreeOptions,
    edges: DashMap<Vec<u8>, Arc<Polyline>>,
}

impl std::fmt::Debug for CodingTree {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CodingTree")
            .field("root", &self.root)
            .field("depth", &self.depth)
            .field("edges", &self.edges.len())
            .finish()
    }
}

impl CodingTree {
    /// Checks the base curves and creates an empty tree.
    ///
    /// `base_vertices[j]` is the vertex list of curve `j + 1`, which must run
    /// from `root` to a preimage of `root`, each preimage used once.
    pub fn new(
        map: &RationalMap,
        root: SpherePoint,
        base_vertices: &[Vec<SpherePoint>],
        depth: usize,
        opts: TreeOptions,
    ) -> Result<Self> {
        let d = map.degree();
        if base_vertices.len() != d {
            return Err(Error::InvalidTree(format!(
                "{} base curves for a map of degree {d}",
                base_vertices.len()
            )));
        }
        let fiber = preimages(map, root)?.simple()?;
        let mut used = vec![false; d];
        let mut base_curves = Vec::with_capacity(d);
        for (j, verts) in base_vertices.iter().enumerate() {
            if verts.len() < 2 || chordal_distance(verts[0], root) > 1e-12 {
                return Err(Error::InvalidTree(format!("base curve {} must start at the root", j + 1)));
            }
            let end = *verts.last().unwrap();
            let (k, gap) = fiber
                .iter()
                .map(|w| chordal_distance(*w, end))
                .enumerate()
                .fold((0, f64::INFINITY), |a, (i, g)| if g < a.1 { (i, g) } else { a });
            if gap > 1e-8 || used[k] {
                return Err(Error::InvalidTree(format!(
                    "base curve {} must end at an unused preimage of the root (gap {gap:e})",
                    j + 1
                )));
            }
            used[k] = true;
            // End exactly on the computed preimage so lifts start cleanly.
            let mut verts = verts.clone();
            *verts.last_mut().unwrap() = fiber[k];
            base_curves.push(Polyline::resampled(&verts, opts.lift.max_step)?);
        }
        Ok(Self {
            map: map.clone(),
            root,
            base_curves,
            depth,
            opts,
            edges: DashMap::new(),
        })
    }

    /// Creates the tree and expands it per `mode`.
    pub fn build(
        map: &RationalMap,
        root: SpherePoint,
        base_vertices: &[Vec<SpherePoint>],
        depth: usize,
        mode: &BuildMode,
        opts: TreeOptions,
    ) -> Result<Self> {
        let tree = Self::new(map, root, base_vertices, depth, opts)?;
        match mode {
            BuildMode::Full => tree.expand_full()?,
            BuildMode::Prefixes(words) => {
                for w in words {
                    w.check_alphabet(tree.degree())?;
                    tree.vertex(&w.prefix(tree.leaf_length()))?;
                }
            }
        }
        Ok(tree)
    }

    fn expand_full(&self) -> Result<()> {
        let d = self.degree();
        let total: usize = (1..=self.leaf_length())
            .map(|n| d.checked_pow(n as u32).unwrap_or(usize::MAX))
            .fold(0usize, |a, b| a.saturating_add(b));
        if total > FULL_EDGE_CAP {
            return Err(Error::InvalidTree(format!(
                "full build would create {total} edges (cap {FULL_EDGE_CAP}); use prefixes mode"
            )));
        }
        // Level by level so every parent exists before its lifts.
        let mut level: Vec<Vec<u8>> = vec![vec![]];
        for _ in 0..self.leaf_length() {
            level = level
                .iter()
                .flat_map(|w| {
                    (1..=d as u8).map(move |s| {
                        let mut v = w.clone();
                        v.push(s);
                        v
                    })
                })
                .collect();
            level
                .par_iter()
                .map(|w| self.edge(w).map(|_| ()))
                .collect::<Result<()>>()?;
        }
        Ok(())
    }

    /// A tree with the same base curves sharing the cached edges of words
    /// up to length `share_len`. Deeper edges are rebuilt on demand, which
    /// gives identical results, so scratch trees bound memory per task.
    pub fn scratch(&self, share_len: usize) -> Self {
        let edges = DashMap::new();
        for e in self.edges.iter().filter(|e| e.key().len() <= share_len) {
            edges.insert(e.key().clone(), e.value().clone());
        }
        Self {
            map: self.map.clone(),
            root: self.root,
            base_curves: self.base_curves.clone(),
            depth: self.depth,
            opts: self.opts,
            edges,
        }
    }

    /// `F_N(target)` for the branch of `f^N` taking `z_m` to `z_{m+N}` along
    /// `symbols`.
    pub fn inverse_branch_point(&self, symbols: &[u8], m: usize, n: usize, target: SpherePoint) -> Result<SpherePoint> {
        self.inverse_branch(symbols, m, n)?.apply(target)
    }

    pub fn map(&self) -> &RationalMap {
        &self.map
    }

    pub fn degree(&self) -> usize {
        self.map.degree()
    }

    pub fn root(&self) -> SpherePoint {
        self.root
    }

    pub fn base_curves(&self) -> &[Polyline] {
        &self.base_curves
    }

    pub fn options(&self) -> &TreeOptions {
        &self.opts
    }

    /// Configured depth: the longest word a build expands.
    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Length of the words whose vertices are the leaves. Depth 0 counts as
    /// depth 1, whose leaves are the base curve endpoints.
    pub fn leaf_length(&self) -> usize {
        self.depth.max(1)
    }

    /// Largest vertex index `m` for which tail statistics are available.
    pub fn available_depth(&self) -> usize {
        self.leaf_length() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// All cached words, sorted.
    pub fn words(&self) -> Vec<Vec<u8>> {
        let mut w: Vec<Vec<u8>> = self.edges.iter().map(|e| e.key().clone()).collect();
        w.sort();
        w
    }

    /// Leaf words of a full build, in lexicographic order.
    pub fn leaf_words(&self) -> Vec<Vec<u8>> {
        self.words()
            .into_iter()
            .filter(|w| w.len() == self.leaf_length())
            .collect()
    }

    /// The edge `gamma_n` for the word `(a_0..a_n)`, built on demand.
    pub fn edge(&self, word: &[u8]) -> Result<Arc<Polyline>> {
        if word.is_empty() {
            return Err(Error::InvalidWord("edges need a nonempty word".into()));
        }
        if let Some(e) = self.edges.get(word) {
            return Ok(e.clone());
        }
        let d = self.degree();
        if word.iter().any(|&s| s == 0 || s as usize > d) {
            return Err(Error::InvalidWord(format!(
                "{} is not a word over 1..{d}",
                format_symbols(word)
            )));
        }
        let edge = if word.len() == 1 {
            self.base_curves[word[0] as usize - 1].clone()
        } else {
            let n = word.len() - 1;
            let parent = self.edge(&word[1..])?;
            let start = self.edge(&word[..n])?.last();
            let lifted = lift_curve(&self.map, &parent, start, &self.opts.lift).map_err(|e| match e {
                Error::BranchAmbiguity { detail, .. } => Error::BranchAmbiguity {
                    word: Some(format_symbols(word)),
                    detail,
                },
                other => other,
            })?;
            if n >= DECIMATE_FROM_LEVEL {
                lifted.decimated(self.opts.min_edge_points, self.opts.lift.max_step)
            } else {
                lifted
            }
        };
        let arc = self
            .edges
            .entry(word.to_vec())
            .or_insert_with(|| Arc::new(edge))
            .clone();
        Ok(arc)
    }

    /// The vertex `z_n` for the word `(a_0..a_n)`; the empty word gives the
    /// root.
    pub fn vertex(&self, word: &[u8]) -> Result<SpherePoint> {
        if word.is_empty() {
            return Ok(self.root);
        }
        Ok(self.edge(word)?.last())
    }

    /// Vertices `z_0..z_{len-1}` along a word.
    pub fn branch_vertices(&self, word: &SymbolWord, len: usize) -> Result<Vec<SpherePoint>> {
        let symbols = word.prefix(len);
        (1..=symbols.len()).map(|k| self.vertex(&symbols[..k])).collect()
    }

    /// Tail statistics from `z_m` to the available depth.
    pub fn branch_tail_stats(&self, word: &SymbolWord, m: usize) -> Result<BranchTail> {
        let available = self.available_depth();
        if m > available {
            return Err(Error::DepthUnavailable {
                requested: m,
                available,
            });
        }
        self.tail_stats_until(word, m, available)
    }

    /// Tail statistics from `z_m` to `z_until`, deepening the tree as needed.
    pub fn tail_stats_until(&self, word: &SymbolWord, m: usize, until: usize) -> Result<BranchTail> {
        word.check_alphabet(self.degree())?;
        let symbols = word.prefix(until + 1);
        if symbols.len() < until + 1 {
            return Err(Error::DepthUnavailable {
                requested: until,
                available: symbols.len().saturating_sub(1),
            });
        }
        let mut tail_length = 0.0;
        let mut verts = vec![self.vertex(&symbols[..m + 1])?];
        for k in m + 1..=until {
            let e = self.edge(&symbols[..k + 1])?;
            tail_length += e.length();
            verts.push(e.last());
        }
        let mut tail_diameter: f64 = 0.0;
        for (i, a) in verts.iter().enumerate() {
            for b in &verts[i + 1..] {
                tail_diameter = tail_diameter.max(chordal_distance(*a, *b));
            }
        }
        Ok(BranchTail {
            word: word.clone(),
            from_depth: m,
            tail_length,
            tail_diameter,
        })
    }

    /// Estimated length of the whole infinite tail beyond `z_m`: the edges
    /// `m+1..=m+look_ahead` plus a geometric remainder.
    pub fn tail_estimate(&self, symbols: &[u8], m: usize, look_ahead: usize) -> Result<f64> {
        let last = m + look_ahead.max(2);
        if symbols.len() < last + 1 {
            return Err(Error::DepthUnavailable {
                requested: last,
                available: symbols.len().saturating_sub(1),
            });
        }
        let mut sum = 0.0;
        let mut prev = 0.0;
        let mut cur = 0.0;
        for k in m + 1..=last {
            prev = cur;
            cur = self.edge(&symbols[..k + 1])?.length();
            sum += cur;
        }
        let ratio = if prev > 0.0 {
            (cur / prev).min(self.opts.ratio_cap)
        } else {
            0.0
        };
        Ok(sum + cur * ratio / (1.0 - ratio))
    }

    /// Limit `z_inf` of the branch of an infinite word, with an error bound.
    ///
    /// Deepens until consecutive vertices move less than `tol` and the
    /// geometric remainder is below `tol`. Fails with `SlowConvergence` once
    /// the edge ratio sits at the cap for `slow_run` edges in a row, or when
    /// `max_depth` is reached.
    pub fn coding_point(&self, word: &SymbolWord, tol: f64, max_depth: usize) -> Result<(SpherePoint, f64)> {
        word.check_alphabet(self.degree())?;
        let symbols = word.prefix(max_depth + 1);
        let mut prev_len = f64::NAN;
        let mut capped_run = 0;
        let mut ratio = 1.0;
        for n in 1..symbols.len() {
            let e = self.edge(&symbols[..n + 1])?;
            let len = e.length();
            let step = chordal_distance(e.first(), e.last());
            if prev_len > 0.0 {
                let raw = len / prev_len;
                ratio = raw.min(self.opts.ratio_cap);
                capped_run = if raw >= self.opts.ratio_cap { capped_run + 1 } else { 0 };
                if capped_run >= self.opts.slow_run {
                    return Err(Error::SlowConvergence {
                        word: word.to_string(),
                        depth: n,
                        ratio: raw,
                    });
                }
                let bound = len * ratio / (1.0 - ratio);
                if step < tol && bound < tol {
                    return Ok((e.last(), bound));
                }
            } else if len == 0.0 {
                return Ok((e.last(), 0.0));
            }
            prev_len = len;
        }
        Err(Error::SlowConvergence {
            word: word.to_string(),
            depth: symbols.len().saturating_sub(1),
            ratio,
        })
    }

    /// Inverse branch of `f^N` at `z_m(word)` taking it to `z_{m+N}(word)`.
    pub fn inverse_branch(&self, symbols: &[u8], m: usize, n: usize) -> Result<InverseBranch> {
        if symbols.len() < m + n + 1 {
            return Err(Error::DepthUnavailable {
                requested: m + n,
                available: symbols.len().saturating_sub(1),
            });
        }
        let anchor = self.vertex(&symbols[..m + 1])?;
        let image = self.vertex(&symbols[..m + n + 1])?;
        InverseBranch::new(&self.map, anchor, image, n, self.opts.lift)
    }

    /// Largest distance from `f` of an edge point to the parent edge, over
    /// the given words.
    pub fn commutation_residual(&self, words: &[Vec<u8>]) -> Result<f64> {
        words
            .par_iter()
            .filter(|w| w.len() >= 2)
            .map(|w| {
                let e = self.edge(w)?;
                let parent = self.edge(&w[1..])?;
                Ok(e.points()
                    .iter()
                    .map(|&p| parent.distance_to(self.map.eval(p)))
                    .fold(0.0, f64::max))
            })
            .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
    }

    /// Writes one JSON line per cached word: word, vertex, edge length and
    /// the tail statistics from that vertex to the available depth.
    pub fn dump(&self, out: &mut impl Write) -> Result<()> {
        for w in self.words() {
            let e = self.edge(&w)?;
            let word = SymbolWord::finite(w.clone())?;
            let m = w.len() - 1;
            let tail = if w.len() <= self.leaf_length() {
                Some(self.tail_stats_until(&word, m, m)?)
            } else {
                None
            };
            let leaf_tail = self
                .words_extending(&w)
                .map(|leaf| -> Result<f64> {
                    let lw = SymbolWord::finite(leaf)?;
                    Ok(self.tail_stats_until(&lw, m, self.available_depth())?.tail_length)
                })
                .transpose()?;
            let record = serde_json::json!({
                "word": format_symbols(&w),
                "depth": m,
                "vertex": e.last(),
                "edge_length": e.length(),
                "edge_points": e.len(),
                "tail_diameter": tail.map(|t| t.tail_diameter),
                "tail_length": leaf_tail,
            });
            writeln!(out, "{record}")?;
        }
        Ok(())
    }

    /// First cached leaf word extending `w` (lexicographic), if any.
    fn words_extending(&self, w: &[u8]) -> Option<Vec<u8>> {
        if w.len() > self.leaf_length() {
            return None;
        }
        let mut cur = w.to_vec();
        while cur.len() < self.leaf_length() {
            let next = (1..=self.degree() as u8).find_map(|s| {
                let mut v = cur.clone();
                v.push(s);
                self.edges.contains_key(&v).then_some(v)
            })?;
            cur = next;
        }
        Some(cur)
    }
}
