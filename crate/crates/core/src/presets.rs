//! Synthetic stand-ins for the three evaluated loops. They reproduce access
//! characteristics, not the original programs.
//!
//! Sizing: every preset's full working set, stores included, exceeds the
//! 2 MiB big-cluster L2, so each invocation streams from memory, while the
//! read footprint of one slice anywhere on the default granularity grid fits
//! the 512 KiB LITTLE L2.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use std::collections::HashSet;

use crate::kernel_ir::{
    trace_addresses, validate_kernel, AccessKind, AddressExpr, ArrayDecl, Instr, InstrId,
    KernelSpec, Op, ValidatedKernel,
};
use crate::machine::{line_of, MachineConfig, LINE_BYTES};
use crate::scheduler::ThreadModel;

pub const PRESET_NAMES: [&str; 3] = ["lbm_like", "cigar_like", "libquantum_like"];

/// Base addresses are spaced 256 MiB apart, far beyond any preset array.
const REGION: u64 = 256 << 20;

fn id(n: u32) -> InstrId {
    InstrId(n)
}

/// Lattice sweep: each cell is one 64-byte line of eight doubles. Iteration
/// `i` reads one value from each of eight neighbour cells at fixed offsets
/// (±1, ±row, ±plane, row + 1, and the cell itself), runs a block of
/// floating-point work, and writes all eight values of its own cell in the
/// destination lattice. No control flow reaches the address slice.
#[derive(Debug, Clone, PartialEq)]
pub struct LbmParams {
    pub cells: u64,
    pub row: u64,
    pub plane: u64,
    pub invocations: u32,
    /// Ops per neighbour address computation.
    pub addr_cost: u32,
    /// Independent compute chains and the ops in each.
    pub compute_chains: u32,
    pub chain_cost: u32,
}

impl Default for LbmParams {
    fn default() -> Self {
        // 24576 cells × 64 B = 1.5 MiB per lattice, 3 MiB for source and
        // destination together: over the big L2. A 4096-cell slice touches
        // 4096 + 2 × 1024 source lines = 384 KiB: under the LITTLE L2.
        LbmParams {
            cells: 24_576,
            row: 32,
            plane: 1024,
            invocations: 10,
            addr_cost: 50,
            compute_chains: 4,
            chain_cost: 10,
        }
    }
}

pub fn lbm_spec(p: &LbmParams) -> KernelSpec {
    let lanes: u64 = 8;
    let halo = p.plane + p.row + 1;
    let offsets = [
        0i64,
        1,
        -1,
        p.row as i64,
        -(p.row as i64),
        p.plane as i64,
        -(p.plane as i64),
        p.row as i64 + 1,
    ];
    let mut k = KernelSpec::new("lbm_like", p.cells)
        .invocations(p.invocations)
        .array(ArrayDecl::new(
            "src",
            8,
            (p.cells + 2 * halo) * lanes,
            REGION,
        ))
        .array(ArrayDecl::new("dst", 8, p.cells * lanes, 2 * REGION));
    let mut next = 1;
    let mut loads = Vec::new();
    for (lane, off) in offsets.iter().enumerate() {
        let calc = next;
        let load = next + 1;
        next += 2;
        k = k
            .instr(Instr::new(
                calc,
                Op::AddrCalc {
                    inputs: vec![],
                    cost: p.addr_cost,
                },
            ))
            .instr(Instr::new(
                load,
                Op::Load {
                    addr: AddressExpr::affine(
                        "src",
                        lanes as i64,
                        (halo as i64 + off) * lanes as i64 + lane as i64,
                    )
                    .via([id(calc)]),
                },
            ));
        loads.push(id(load));
    }
    let mut results = Vec::new();
    for c in 0..p.compute_chains as usize {
        let inputs: Vec<InstrId> = loads
            .iter()
            .copied()
            .skip(c)
            .step_by(p.compute_chains as usize)
            .collect();
        k = k.instr(Instr::new(
            next,
            Op::Compute {
                inputs,
                cost: p.chain_cost,
            },
        ));
        results.push(id(next));
        next += 1;
    }
    for lane in 0..lanes {
        let source = results[lane as usize % results.len()];
        k = k.instr(Instr::new(
            next,
            Op::Store {
                addr: AddressExpr::affine("dst", lanes as i64, lane as i64),
                source: Some(source),
            },
        ));
        next += 1;
    }
    k
}

/// Population scan: `idx` holds a seeded permutation of individuals; for
/// each entry the loop loads two doubles of the addressed 64-byte struct,
/// compares them against the running maximum and writes an entry of the
/// integer ordering array.
#[derive(Debug, Clone, PartialEq)]
pub struct CigarParams {
    pub iterations: u64,
    pub population: u64,
    pub invocations: u32,
    /// Ops to turn an index into a struct address.
    pub addr_cost: u32,
    pub compare_cost: u32,
    pub seed: u64,
}

impl Default for CigarParams {
    fn default() -> Self {
        // 65536 structs × 64 B = 4 MiB of population, touched at random:
        // over the big L2. A 4096-iteration slice touches at most 4096
        // struct lines plus 64 index lines ≈ 260 KiB: under the LITTLE L2.
        CigarParams {
            iterations: 32_768,
            population: 65_536,
            invocations: 1,
            addr_cost: 300,
            compare_cost: 2,
            seed: 0x5eed,
        }
    }
}

pub fn cigar_spec(p: &CigarParams) -> KernelSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut perm: Vec<i64> = (0..p.population as i64).collect();
    perm.shuffle(&mut rng);
    perm.truncate(p.iterations as usize);
    let fields: i64 = 8;
    KernelSpec::new("cigar_like", p.iterations)
        .invocations(p.invocations)
        .array(ArrayDecl::new("idx", 4, p.iterations, REGION).with_contents(perm))
        .array(ArrayDecl::new(
            "pop",
            8,
            p.population * fields as u64,
            2 * REGION,
        ))
        .array(ArrayDecl::new("order", 4, p.iterations, 3 * REGION))
        .instr(Instr::new(
            1,
            Op::AddrCalc {
                inputs: vec![],
                cost: 1,
            },
        ))
        .instr(Instr::new(
            2,
            Op::Load {
                addr: AddressExpr::affine("idx", 1, 0).via([id(1)]),
            },
        ))
        .instr(Instr::new(
            3,
            Op::AddrCalc {
                inputs: vec![id(2)],
                cost: p.addr_cost,
            },
        ))
        .instr(Instr::new(
            4,
            Op::Load {
                addr: AddressExpr::indirect("pop", id(2), fields, 0).via([id(3)]),
            },
        ))
        .instr(Instr::new(
            5,
            Op::Load {
                addr: AddressExpr::indirect("pop", id(2), fields, 1).via([id(3)]),
            },
        ))
        .instr(Instr::new(
            6,
            Op::Compute {
                inputs: vec![id(4), id(5)],
                cost: p.compare_cost,
            },
        ))
        .instr(Instr::new(
            7,
            Op::Store {
                addr: AddressExpr::affine("order", 1, 0),
                source: Some(id(6)),
            },
        ))
}

/// Register update: a unit-stride walk over 16-byte nodes that XORs the
/// state member of every node.
#[derive(Debug, Clone, PartialEq)]
pub struct LibquantumParams {
    pub nodes: u64,
    pub invocations: u32,
}

impl Default for LibquantumParams {
    fn default() -> Self {
        // 196608 nodes × 16 B = 3 MiB: over the big L2. A 4096-node slice
        // is 64 KiB: under the LITTLE L2.
        LibquantumParams {
            nodes: 196_608,
            invocations: 4,
        }
    }
}

pub fn libquantum_spec(p: &LibquantumParams) -> KernelSpec {
    let node: i64 = 2;
    KernelSpec::new("libquantum_like", p.nodes)
        .invocations(p.invocations)
        .array(ArrayDecl::new("reg", 8, p.nodes * node as u64, REGION))
        .instr(Instr::new(
            1,
            Op::Load {
                addr: AddressExpr::affine("reg", node, 1),
            },
        ))
        .instr(Instr::new(
            2,
            Op::Compute {
                inputs: vec![id(1)],
                cost: 1,
            },
        ))
        .instr(Instr::new(
            3,
            Op::Store {
                addr: AddressExpr::affine("reg", node, 1),
                source: Some(id(2)),
            },
        ))
}

/// A preset kernel by name, at its default size.
pub fn preset(name: &str) -> Option<ValidatedKernel> {
    let spec = match name {
        "lbm_like" => lbm_spec(&LbmParams::default()),
        "cigar_like" => cigar_spec(&CigarParams::default()),
        "libquantum_like" => libquantum_spec(&LibquantumParams::default()),
        _ => return None,
    };
    Some(validate_kernel(spec).expect("presets are valid"))
}

/// A preset's thread model: libquantum_like reuses a pool across its
/// invocations, the others spawn per invocation.
pub fn preset_threads(name: &str, machine: &MachineConfig) -> ThreadModel {
    match name {
        "libquantum_like" => ThreadModel::pool(machine),
        _ => ThreadModel::spawn(machine),
    }
}

/// A preset scaled to `iterations` per invocation, for oracle runs.
pub fn preset_with_iterations(
    name: &str,
    iterations: u64,
    invocations: u32,
) -> Option<ValidatedKernel> {
    let spec = match name {
        "lbm_like" => lbm_spec(&LbmParams {
            cells: iterations,
            invocations,
            ..LbmParams::default()
        }),
        "cigar_like" => cigar_spec(&CigarParams {
            iterations,
            population: (2 * iterations).max(64),
            invocations,
            ..CigarParams::default()
        }),
        "libquantum_like" => libquantum_spec(&LibquantumParams {
            nodes: iterations,
            invocations,
        }),
        _ => return None,
    };
    Some(validate_kernel(spec).expect("scaled presets are valid"))
}

/// Distinct cache lines read by iterations `0..g`.
pub fn read_footprint_lines(kernel: &ValidatedKernel, g: u64) -> u64 {
    let trace =
        trace_addresses(kernel, 0..g.min(kernel.iterations())).expect("validated kernels trace");
    let lines: HashSet<u64> = trace
        .iter()
        .filter(|e| e.kind != AccessKind::Store)
        .map(|e| line_of(e.address))
        .collect();
    lines.len() as u64
}

/// The default granularity grid: powers of two from 64 while one slice's
/// read footprint still fits the LITTLE L2. Beyond that, prefetched lines are
/// evicted before Execute reaches them and the decoupling no longer applies.
pub fn granularity_grid(kernel: &ValidatedKernel, machine: &MachineConfig) -> Vec<u64> {
    let n = kernel.iterations();
    let capacity = machine.little.l2.size_bytes / u64::from(LINE_BYTES);
    let mut g = 64.min(n);
    let mut out = vec![g];
    while g < n {
        g = (2 * g).min(n);
        if read_footprint_lines(kernel, g) > capacity {
            break;
        }
        out.push(g);
    }
    out
}
