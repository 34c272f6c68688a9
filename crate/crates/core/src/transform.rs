//! Loop chunking and Access/Execute phase generation.
//!
//! The loop is split into an outer loop over slices of `granularity`
//! iterations and an inner loop over one slice. The Execute phase is the
//! original body, chunked. The Access phase keeps the backward address slice,
//! keeps loads whose values feed addresses as real loads, and turns every
//! other load into a non-blocking prefetch. Stores and value computation are
//! dropped.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::ops::Range;

use crate::error::TransformError;
use crate::kernel_ir::{backward_address_slice, text::fmt_op, Instr, InstrId, Op, ValidatedKernel};

/// Loop-control ops per inner-loop iteration (`i = offset + k`, increment,
/// compare-and-branch folded into one op).
pub const INNER_LOOP_OPS: u64 = 1;
/// Loop-control ops per slice (`offset += granularity`, outer compare).
pub const OUTER_LOOP_OPS: u64 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct ChunkedKernel {
    base: ValidatedKernel,
    granularity: u64,
    slice_count: u64,
}

impl ChunkedKernel {
    pub fn base(&self) -> &ValidatedKernel {
        &self.base
    }

    pub fn granularity(&self) -> u64 {
        self.granularity
    }

    pub fn slice_count(&self) -> u64 {
        self.slice_count
    }

    /// Iterations covered by slice `s`; the last slice may be short.
    pub fn slice(&self, s: u64) -> Range<u64> {
        let start = s * self.granularity;
        start..(start + self.granularity).min(self.base.iterations())
    }

    pub fn slices(&self) -> impl Iterator<Item = Range<u64>> + '_ {
        (0..self.slice_count).map(|s| self.slice(s))
    }
}

pub fn chunk(kernel: &ValidatedKernel, granularity: u64) -> Result<ChunkedKernel, TransformError> {
    let n = kernel.iterations();
    if granularity == 0 || granularity > n {
        return Err(TransformError::GranularityOutOfRange {
            granularity,
            iterations: n,
        });
    }
    Ok(ChunkedKernel {
        base: kernel.clone(),
        granularity,
        slice_count: n.div_ceil(granularity),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TransformOptions {
    /// Prefetch unconditionally instead of copying predicates into the
    /// Access phase. Safe because prefetches have no side effects.
    pub elide_predicates: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhasePair {
    pub access: ValidatedKernel,
    pub execute: ValidatedKernel,
    pub granularity: u64,
    pub slice_count: u64,
    /// Set when the Access phase has no memory work at all.
    pub degenerate: bool,
}

impl PhasePair {
    pub fn slice(&self, s: u64) -> Range<u64> {
        let start = s * self.granularity;
        start..(start + self.granularity).min(self.execute.iterations())
    }

    pub fn chunked_execute(&self) -> ChunkedKernel {
        ChunkedKernel {
            base: self.execute.clone(),
            granularity: self.granularity,
            slice_count: self.slice_count,
        }
    }

    /// Pseudocode of both phases in the shape of the chunked loop.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let n = self.execute.iterations();
        for (name, k) in [("access", &self.access), ("execute", &self.execute)] {
            let _ = writeln!(out, "void {name}() {{");
            out.push_str("  offset = 0\n");
            let _ = writeln!(
                out,
                "  for (j = 0; j < {}; j++) {{  // N = {n}",
                self.slice_count
            );
            let _ = writeln!(
                out,
                "    for (k = 0; k < {} && offset + k < {n}; k++) {{",
                self.granularity
            );
            out.push_str("      i = offset + k\n");
            for instr in k.body() {
                let guard = instr
                    .predicate
                    .as_ref()
                    .map(|p| {
                        let pat: String = p
                            .pattern
                            .iter()
                            .map(|&b| if b { '1' } else { '0' })
                            .collect();
                        format!("if ({pat}[i % {}]) ", p.pattern.len())
                    })
                    .unwrap_or_default();
                let _ = writeln!(out, "      {guard}{} = {}", instr.id, fmt_op(&instr.op));
            }
            out.push_str("    }\n");
            let _ = writeln!(out, "    offset += {}", self.granularity);
            out.push_str("  }\n}\n");
        }
        out
    }
}

pub fn make_phase_pair(chunked: &ChunkedKernel) -> PhasePair {
    make_phase_pair_with(chunked, TransformOptions::default())
}

pub fn make_phase_pair_with(chunked: &ChunkedKernel, opts: TransformOptions) -> PhasePair {
    let base = chunked.base();
    let slice: BTreeSet<InstrId> = backward_address_slice(base);
    let mut body = Vec::new();
    for instr in base.body() {
        let op = if slice.contains(&instr.id) {
            instr.op.clone()
        } else if let Op::Load { addr } = &instr.op {
            Op::Prefetch { addr: addr.clone() }
        } else {
            continue;
        };
        body.push(Instr {
            id: instr.id,
            op,
            predicate: if opts.elide_predicates {
                None
            } else {
                instr.predicate.clone()
            },
        });
    }
    let degenerate = !body
        .iter()
        .any(|i| matches!(i.op, Op::Load { .. } | Op::Prefetch { .. }));
    // An empty Access body still needs to be a valid kernel to be simulated;
    // it runs loop control only.
    let access = if body.is_empty() {
        base.derive_empty(format!("{}.access", base.name()))
    } else {
        base.derive(format!("{}.access", base.name()), body)
            .expect("access phase of a valid kernel is valid")
    };
    PhasePair {
        access,
        execute: base.clone(),
        granularity: chunked.granularity(),
        slice_count: chunked.slice_count(),
        degenerate,
    }
}

/// Dynamic body ops of a kernel over all iterations, loop control excluded.
pub fn dynamic_ops(kernel: &ValidatedKernel) -> u64 {
    let mut ops = 0;
    kernel
        .walk(0..kernel.iterations(), |_, _, instr, _| {
            ops += op_count(&instr.op)
        })
        .expect("full range");
    ops
}

pub(crate) fn op_count(op: &Op) -> u64 {
    match op {
        Op::AddrCalc { cost, .. } | Op::Compute { cost, .. } => u64::from(*cost),
        _ => 1,
    }
}

/// (Access ops + Execute ops) / base ops, over the whole iteration space.
pub fn instruction_overhead(pair: &PhasePair) -> f64 {
    let execute = dynamic_ops(&pair.execute);
    let access = if pair.access.body().is_empty() {
        0
    } else {
        dynamic_ops(&pair.access)
    };
    (access + execute) as f64 / execute as f64
}
