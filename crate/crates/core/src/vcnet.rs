//! Layered-net online average factorization for Boolean rows with bounded
//! shatter function exponent.
//!
//! Arriving rows are threaded into layers `𝓛₀..𝓛_h` (`h = ⌈log₂N⌉`) where
//! layer `i` keeps stored vectors pairwise further than `√(2^{-i}N)`
//! apart. Scanning from the bottom, a row links to the first stored
//! vector within the layer's radius (closest wins, earliest on ties) and
//! is stored in every layer it passed. The link contributes one
//! *difference edge*, hence one right row `ε_i^{-1}(child - parent)`, and
//! a row's left coefficients are the `ε_i` along its path to the root.
//! Comparisons use exact integer squared distances.
//!
//! Haussler packing keeps `|𝓛_i| ≲ 2^{di}`, which with the schedule
//! `ε_i = m^{(d-1)/(2d)}·(1+|h*-i|)^{-1.5}` bounds `‖R‖_F² = O(N)` and
//! `‖ℓ‖₂² = O(m^{1-1/d})`. A fixed divisor (default 8) normalizes
//! `‖R‖_F² ≤ N` exactly.

use crate::transforms::{AverageEngine, EngineFactory, EngineStep};
use crate::{Error, Result};

/// Default normalization divisor applied to right rows.
pub const NORM_DIVISOR: f64 = 8.0;
/// Layers whose occupancy exceeds `AUDIT_CONSTANT · 2^{di}` get flagged.
pub const AUDIT_CONSTANT: f64 = 10.0;

#[derive(Debug, Clone)]
pub struct VcNetConfig {
    pub dim_n: usize,
    /// Expected number of inserts `m`, fixed upfront for the `ε` schedule.
    pub expected_m: usize,
    /// Shatter function exponent `d ≥ 2` used by the schedule.
    pub shatter_exponent: usize,
    pub norm_divisor: f64,
}

impl VcNetConfig {
    pub fn new(dim_n: usize, expected_m: usize, shatter_exponent: usize) -> Result<Self> {
        if shatter_exponent < 2 {
            return Err(Error::BadSpec("shatter exponent must be at least 2".into()));
        }
        if expected_m == 0 || dim_n == 0 {
            return Err(Error::BadSpec("dim_n and expected_m must be positive".into()));
        }
        Ok(Self { dim_n, expected_m, shatter_exponent, norm_divisor: NORM_DIVISOR })
    }

    /// `h* = ⌈log₂(m)/d⌉`, the layer the schedule centers on.
    pub fn h_star(&self) -> usize {
        ((self.expected_m as f64).log2() / self.shatter_exponent as f64).ceil() as usize
    }

    /// `ε_i = m^{(d-1)/(2d)}·(1+|h*-i|)^{-1.5}` for child layers
    /// `i = 1..=h+1` (the `h+1` slot serves leaf edges).
    pub fn epsilon(&self, i: usize) -> f64 {
        let d = self.shatter_exponent as f64;
        let m = self.expected_m as f64;
        let gap = (self.h_star() as f64 - i as f64).abs();
        m.powf((d - 1.0) / (2.0 * d)) * (1.0 + gap).powf(-1.5)
    }

    /// `Σ_i (1 + |h* - i|)^{-3}` over the child layers, for the `‖ℓ‖`
    /// bound.
    pub fn schedule_sum(&self, h: usize) -> f64 {
        (1..=h + 1)
            .map(|i| {
                let gap = (self.h_star() as f64 - i as f64).abs();
                (1.0 + gap).powi(-3)
            })
            .sum()
    }
}

struct Stored {
    vec: Vec<u8>,
    /// Difference edges from this vector to the root: `(row index, ε)`.
    path: Vec<(usize, f64)>,
    /// Insertion order within the layer, for tie breaking.
    order: usize,
}

/// Outcome of one insert, in the engine's (already normalized) scale.
#[derive(Debug, Clone)]
pub struct NetInsert {
    /// Zero or one new right row `(index, row)`.
    pub new_rows: Vec<(usize, Vec<f64>)>,
    /// Coefficients over right-row indices reconstructing the inserted
    /// row exactly.
    pub left: Vec<(usize, f64)>,
    /// Layer at which the scan stopped (the parent's layer).
    pub stop_layer: usize,
    /// Layers the row was stored in (empty for immediate links).
    pub stored_layers: Vec<usize>,
}

pub struct NetStructure {
    cfg: VcNetConfig,
    h: usize,
    layers: Vec<Vec<Stored>>,
    /// Unnormalized difference rows `ε_i^{-1}(child - parent)`.
    rows: Vec<Vec<f64>>,
    frob_sq_unnormalized: f64,
    inserts: usize,
    last_left: Vec<(usize, f64)>,
}

impl NetStructure {
    pub fn new(cfg: VcNetConfig) -> Self {
        let h = (cfg.dim_n as f64).log2().ceil() as usize;
        // The zero vector seeds every layer; its path is empty.
        let layers = (0..=h)
            .map(|_| vec![Stored { vec: vec![0; cfg.dim_n], path: Vec::new(), order: 0 }])
            .collect();
        Self {
            cfg,
            h,
            layers,
            rows: Vec::new(),
            frob_sq_unnormalized: 0.0,
            inserts: 0,
            last_left: Vec::new(),
        }
    }

    pub fn config(&self) -> &VcNetConfig {
        &self.cfg
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn inserts(&self) -> usize {
        self.inserts
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.len()).collect()
    }

    /// Normalized right rows.
    pub fn rows(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        let div = self.cfg.norm_divisor;
        self.rows.iter().map(move |r| r.iter().map(|v| v / div).collect())
    }

    /// `‖R‖_F²` after normalization.
    pub fn frob_norm_sq(&self) -> f64 {
        self.frob_sq_unnormalized / (self.cfg.norm_divisor * self.cfg.norm_divisor)
    }

    pub fn frob_norm_sq_unnormalized(&self) -> f64 {
        self.frob_sq_unnormalized
    }

    /// Left row of the most recent insert (normalized scale).
    pub fn last_left(&self) -> &[(usize, f64)] {
        &self.last_left
    }

    /// Inserts a Boolean row; scans layers bottom-up, links at the first
    /// layer holding a vector within `√(2^{-i}N)` (exact integer
    /// comparison `dist²·2^i ≤ N`), storing a copy in every layer passed.
    /// At most one difference edge is created; a zero difference (exact
    /// duplicate) is dropped.
    pub fn insert(&mut self, q: &[f64]) -> Result<NetInsert> {
        if q.len() != self.cfg.dim_n {
            return Err(Error::BadInput(format!(
                "row has {} entries, expected {}",
                q.len(),
                self.cfg.dim_n
            )));
        }
        let qb: Vec<u8> = q
            .iter()
            .map(|&x| {
                if x == 0.0 {
                    Ok(0u8)
                } else if x == 1.0 {
                    Ok(1u8)
                } else {
                    Err(Error::BadInput(format!("non-Boolean entry {x}")))
                }
            })
            .collect::<Result<_>>()?;
        self.inserts += 1;

        let mut stored_layers = Vec::new();
        let mut link: Option<(usize, usize)> = None; // (layer, index)
        for i in (0..=self.h).rev() {
            if let Some(idx) = self.closest_within(i, &qb) {
                link = Some((i, idx));
                break;
            }
            let order = self.layers[i].len();
            self.layers[i].push(Stored {
                vec: qb.clone(),
                path: Vec::new(), // patched below once the link is known
                order,
            });
            stored_layers.push(i);
        }
        let (stop_layer, parent_idx) =
            link.expect("layer 0 holds the zero vector within radius √N");

        // The difference edge sits at the child layer: the deepest stored
        // copy, or the conceptual leaf at h+1 for immediate links.
        let child_layer = stop_layer + 1;
        let eps = self.cfg.epsilon(child_layer);
        let parent_vec = self.layers[stop_layer][parent_idx].vec.clone();
        let mut parent_path = self.layers[stop_layer][parent_idx].path.clone();
        let mut new_rows = Vec::new();
        if parent_vec != qb {
            let row: Vec<f64> = qb
                .iter()
                .zip(&parent_vec)
                .map(|(&c, &p)| (c as f64 - p as f64) / eps)
                .collect();
            let idx = self.rows.len();
            self.frob_sq_unnormalized += row.iter().map(|v| v * v).sum::<f64>();
            self.rows.push(row.clone());
            parent_path.push((idx, eps));
            let div = self.cfg.norm_divisor;
            new_rows.push((idx, row.iter().map(|v| v / div).collect()));
        }
        // All copies of q share the same path to the root.
        for &layer in &stored_layers {
            let entry = self.layers[layer].last_mut().unwrap();
            entry.path = parent_path.clone();
        }
        let div = self.cfg.norm_divisor;
        self.last_left = parent_path.iter().map(|&(idx, eps)| (idx, eps * div)).collect();
        Ok(NetInsert {
            new_rows,
            left: self.last_left.clone(),
            stop_layer,
            stored_layers,
        })
    }

    fn closest_within(&self, layer: usize, q: &[u8]) -> Option<usize> {
        // dist² ≤ 2^{-i}N  ⟺  dist²·2^i ≤ N, in exact integers.
        let n = self.cfg.dim_n as u64;
        let shift = layer as u32;
        let mut best: Option<(u64, usize, usize)> = None;
        for (idx, s) in self.layers[layer].iter().enumerate() {
            let d2 = hamming(q, &s.vec);
            if d2.checked_shl(shift).map_or(false, |v| v <= n) {
                let key = (d2, s.order, idx);
                if best.map_or(true, |(bd, bo, _)| (key.0, key.1) < (bd, bo)) {
                    best = Some(key);
                }
            }
        }
        best.map(|(_, _, idx)| idx)
    }

    /// Exact structural checks: pairwise layer separation and the parent
    /// distance bound. Quadratic; used by tests and the audit paths.
    pub fn check_invariants(&self) -> Result<()> {
        let n = self.cfg.dim_n as u64;
        for (i, layer) in self.layers.iter().enumerate() {
            for a in 0..layer.len() {
                for b in (a + 1)..layer.len() {
                    let d2 = hamming(&layer[a].vec, &layer[b].vec);
                    // Stored vectors failed the ≤ test, so strict >.
                    if d2.checked_shl(i as u32).map_or(false, |v| v <= n) {
                        return Err(Error::PipelineError(format!(
                            "layer {i} separation violated: dist² {d2}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

fn hamming(a: &[u8], b: &[u8]) -> u64 {
    a.iter().zip(b).filter(|(x, y)| x != y).count() as u64
}

/// One line of the packing audit.
#[derive(Debug, Clone)]
pub struct PackingLayer {
    pub layer: usize,
    pub count: usize,
    /// `|𝓛_i| / 2^{d·i}`.
    pub ratio: f64,
    pub flagged: bool,
}

/// Checks the layer occupancies against the packing bound for a *claimed*
/// exponent `d` (which may differ from the schedule's). Flagged layers
/// mean the input family does not have exponent `d`.
pub fn packing_audit(net: &NetStructure, d: usize, audit_constant: f64) -> Vec<PackingLayer> {
    net.layer_sizes()
        .iter()
        .enumerate()
        .map(|(i, &count)| {
            let cap = 2.0_f64.powi((d * i) as i32);
            let ratio = count as f64 / cap;
            PackingLayer { layer: i, count, ratio, flagged: ratio > audit_constant }
        })
        .collect()
}

/// The net as an [`AverageEngine`], for composition with the wrappers.
pub struct VcNetEngine {
    net: NetStructure,
}

impl AverageEngine for VcNetEngine {
    fn bootstrap_rows(&mut self) -> Vec<Vec<f64>> {
        Vec::new()
    }

    fn step(&mut self, q: &[f64]) -> Result<EngineStep> {
        let ins = self.net.insert(q)?;
        Ok(EngineStep::Extended {
            new_rows: ins.new_rows.into_iter().map(|(_, r)| r).collect(),
            left: ins.left,
        })
    }
}

/// Factory building per-universe net engines with a shared schedule.
#[derive(Debug, Clone)]
pub struct VcNetFactory {
    pub expected_m: usize,
    pub shatter_exponent: usize,
    pub norm_divisor: f64,
    /// Global column count, used only for the uniform left-norm cap.
    pub global_n: usize,
}

impl EngineFactory for VcNetFactory {
    fn make(&self, universe_size: usize) -> Box<dyn AverageEngine> {
        let mut cfg = VcNetConfig::new(universe_size, self.expected_m, self.shatter_exponent)
            .expect("validated at factory construction");
        cfg.norm_divisor = self.norm_divisor;
        Box::new(VcNetEngine { net: NetStructure::new(cfg) })
    }

    fn left_norm_cap(&self) -> f64 {
        let cfg = VcNetConfig {
            dim_n: self.global_n,
            expected_m: self.expected_m,
            shatter_exponent: self.shatter_exponent,
            norm_divisor: self.norm_divisor,
        };
        let h = (self.global_n as f64).log2().ceil() as usize;
        let d = self.shatter_exponent as f64;
        let m = self.expected_m as f64;
        let sum = cfg.schedule_sum(h);
        self.norm_divisor * (m.powf(1.0 - 1.0 / d) * sum).sqrt()
    }
}
