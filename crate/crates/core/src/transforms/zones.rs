//! The kick-out reduction: zones `0..=⌊log₂N⌋`, each a semi-dynamic
//! factorization over a shifting subset of the columns. A column whose
//! squared norm in a zone's insertion-side right matrix exceeds 2 is
//! deleted there and inserted into the next zone at the same step, before
//! that zone processes the row. By Markov, zone `ζ` holds fewer than
//! `2^{-ζ}N` columns and the last zone never kicks. The concatenated
//! output is rescaled by `1/√(2·log₂(2N))` so every column of the final
//! right matrix has norm at most 1.

use super::semidynamic::{Advance, SemiDynamicWrapper};
use super::{DualCertificate, EngineFactory};
use crate::{Error, Result};

/// Kick threshold: strictly greater than 2, with tolerance.
const KICK_TOL: f64 = 1e-9;

/// One step of the bounded row pipeline. Ordinals index the pipeline's
/// cumulative output rows.
#[derive(Debug, Clone)]
pub enum BoundedStep {
    Extended {
        new_rows: Vec<(usize, Vec<f64>)>,
        left: Vec<(usize, f64)>,
    },
    Asserted {
        certificate: DualCertificate,
        universe: Vec<usize>,
    },
}

#[derive(Debug, Clone)]
pub struct KickEvent {
    pub step: usize,
    pub zone: usize,
    pub column: usize,
}

struct ZoneSlot<F: EngineFactory> {
    sd: SemiDynamicWrapper<F>,
    alive: std::collections::BTreeSet<usize>,
    /// Pipeline ordinal of each of this zone's output rows.
    out_map: Vec<usize>,
}

/// The `(γ, C√2·log₂(4N)³)`-bounded online factorization pipeline built
/// from a `(γ, C)`-bounded average engine factory.
pub struct ZonePipeline<F: EngineFactory + Clone> {
    dim_n: usize,
    zones: Vec<ZoneSlot<F>>,
    final_scale: f64,
    next_ordinal: usize,
    kick_log: Vec<KickEvent>,
    step: usize,
    asserted: bool,
    engine_cap: f64,
}

impl<F: EngineFactory + Clone> ZonePipeline<F> {
    pub fn new(factory: F, dim_n: usize) -> Result<Self> {
        assert!(dim_n > 0);
        let k_max = (dim_n as f64).log2().floor() as usize;
        let engine_cap = factory.left_norm_cap();
        let mut zones: Vec<ZoneSlot<F>> = (0..=k_max)
            .map(|_| ZoneSlot {
                sd: SemiDynamicWrapper::new(factory.clone(), dim_n),
                alive: Default::default(),
                out_map: Vec::new(),
            })
            .collect();
        let final_scale = 1.0 / (2.0 * (2.0 * dim_n as f64).log2()).sqrt();
        let mut pipeline = Self {
            dim_n,
            zones: Vec::new(),
            final_scale,
            next_ordinal: 0,
            kick_log: Vec::new(),
            step: 0,
            asserted: false,
            engine_cap,
        };
        // Zone 0 starts with the whole universe; the others start empty.
        let all: Vec<usize> = (0..dim_n).collect();
        let rows = zones[0].sd.insert_columns(&all)?;
        zones[0].alive.extend(all);
        pipeline.zones = zones;
        for (sd_ord, _) in rows {
            let ord = pipeline.next_ordinal;
            pipeline.next_ordinal += 1;
            debug_assert_eq!(pipeline.zones[0].out_map.len(), sd_ord);
            pipeline.zones[0].out_map.push(ord);
        }
        Ok(pipeline)
    }

    pub fn dim_n(&self) -> usize {
        self.dim_n
    }

    pub fn kick_log(&self) -> &[KickEvent] {
        &self.kick_log
    }

    /// Per-zone insertion-side universe sizes (for the Markov bound
    /// `|U^ins_ζ| < 2^{-ζ}N`).
    pub fn zone_ins_sizes(&self) -> Vec<usize> {
        self.zones.iter().map(|z| z.sd.inner().universe_size()).collect()
    }

    pub fn zone_alive_sizes(&self) -> Vec<usize> {
        self.zones.iter().map(|z| z.alive.len()).collect()
    }

    /// `‖ℓ_t‖₂` cap of the composed pipeline:
    /// engine cap × √2 × log₂(2N)² × log₂(4N).
    pub fn left_norm_cap(&self) -> f64 {
        let l2n = (2.0 * self.dim_n as f64).log2();
        let l4n = (4.0 * self.dim_n as f64).log2();
        self.engine_cap * 2.0_f64.sqrt() * l2n * l2n * l4n
    }

    /// Rows of the initial right matrix (zone 0 bootstrap), rescaled.
    /// Available right after construction, before the first step.
    pub fn bootstrap_rows(&self) -> Vec<(usize, Vec<f64>)> {
        self.zones[0]
            .out_map
            .iter()
            .enumerate()
            .map(|(sd_ord, &ord)| {
                let row: Vec<f64> =
                    self.zones[0].sd.rows()[sd_ord].iter().map(|v| v * self.final_scale).collect();
                (ord, row)
            })
            .collect()
    }

    pub fn step(&mut self, q: &[f64]) -> Result<BoundedStep> {
        if self.asserted {
            return Err(Error::InvalidState("zone pipeline already asserted".into()));
        }
        if q.len() != self.dim_n {
            return Err(Error::BadInput(format!(
                "row has {} entries, expected {}",
                q.len(),
                self.dim_n
            )));
        }
        self.step += 1;
        let mut buffer: Vec<usize> = Vec::new();
        let mut new_rows: Vec<(usize, Vec<f64>)> = Vec::new();
        let mut left: Vec<(usize, f64)> = Vec::new();

        for zeta in 0..self.zones.len() {
            let inserts = std::mem::take(&mut buffer);
            self.zones[zeta].alive.extend(inserts.iter().copied());

            match self.zones[zeta].sd.advance_inner(q, &inserts)? {
                Advance::Asserted { certificate, universe } => {
                    self.asserted = true;
                    return Ok(BoundedStep::Asserted { certificate, universe });
                }
                Advance::Proceed => {}
            }

            // Kick out every alive column whose squared norm in this
            // zone's insertion-side right matrix exceeded 2.
            let kicks: Vec<usize> = self.zones[zeta]
                .alive
                .iter()
                .copied()
                .filter(|&x| self.zones[zeta].sd.inner().col_norm_sq(x) > 2.0 + KICK_TOL)
                .collect();
            for &x in &kicks {
                self.zones[zeta].alive.remove(&x);
                self.kick_log.push(KickEvent { step: self.step, zone: zeta, column: x });
            }
            buffer = kicks.clone();

            let sd_step = self.zones[zeta].sd.absorb(&kicks)?;
            for (sd_ord, row) in sd_step.new_rows {
                let ord = self.next_ordinal;
                self.next_ordinal += 1;
                debug_assert_eq!(self.zones[zeta].out_map.len(), sd_ord);
                self.zones[zeta].out_map.push(ord);
                new_rows.push((ord, row.iter().map(|v| v * self.final_scale).collect()));
            }
            for (sd_ord, c) in sd_step.left {
                left.push((self.zones[zeta].out_map[sd_ord], c / self.final_scale));
            }
        }
        if !buffer.is_empty() {
            // The Markov bound guarantees the last zone never kicks.
            return Err(Error::PipelineError(format!(
                "last zone kicked columns {buffer:?} at step {}",
                self.step
            )));
        }
        left.sort_unstable_by_key(|&(ord, _)| ord);
        Ok(BoundedStep::Extended { new_rows, left })
    }
}
