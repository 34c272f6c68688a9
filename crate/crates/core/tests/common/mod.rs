//! Random kernels for property tests.

#![allow(dead_code)]

use dae_core::kernel_ir::{
    validate_kernel, AddressExpr, ArrayDecl, Instr, InstrId, KernelSpec, Op, ValidatedKernel,
};
use proptest::prelude::*;

#[derive(Debug, Clone)]
pub enum Piece {
    AddrCalc {
        cost: u32,
        chained: bool,
    },
    Load {
        scale: i64,
        offset: i64,
        elem: u32,
        via: bool,
        pred: Option<Vec<bool>>,
    },
    Gather {
        table: Vec<i64>,
        scale: i64,
        elem: u32,
        via: bool,
    },
    Compute {
        cost: u32,
        fan_in: usize,
        pred: Option<Vec<bool>>,
    },
    Store {
        scale: i64,
        offset: i64,
        pred: Option<Vec<bool>>,
    },
}

fn pattern() -> impl Strategy<Value = Option<Vec<bool>>> {
    prop::option::weighted(0.25, prop::collection::vec(any::<bool>(), 1..5))
}

fn piece() -> impl Strategy<Value = Piece> {
    prop_oneof![
        (1u32..6, any::<bool>()).prop_map(|(cost, chained)| Piece::AddrCalc { cost, chained }),
        (
            0i64..3,
            0i64..4,
            prop::sample::select(vec![8u32, 64]),
            any::<bool>(),
            pattern()
        )
            .prop_map(|(scale, offset, elem, via, pred)| Piece::Load {
                scale,
                offset,
                elem,
                via,
                pred
            }),
        (
            prop::collection::vec(0i64..32, 1..9),
            1i64..3,
            prop::sample::select(vec![8u32, 64]),
            any::<bool>()
        )
            .prop_map(|(table, scale, elem, via)| Piece::Gather {
                table,
                scale,
                elem,
                via
            }),
        (1u32..8, 0usize..3, pattern()).prop_map(|(cost, fan_in, pred)| Piece::Compute {
            cost,
            fan_in,
            pred
        }),
        (0i64..3, 0i64..3, pattern()).prop_map(|(scale, offset, pred)| Piece::Store {
            scale,
            offset,
            pred
        }),
    ]
}

/// Builds a valid kernel with `n` iterations from `pieces`. Every memory
/// op gets its own array, sized to keep every address in bounds.
pub fn build(n: u64, pieces: &[Piece]) -> KernelSpec {
    let mut k = KernelSpec::new("random", n);
    let mut next_id = 1u32;
    let mut next_base = 0x10_0000u64;
    let mut addrcalcs: Vec<InstrId> = Vec::new();
    let mut values: Vec<InstrId> = Vec::new();
    let mut array = |k: &mut KernelSpec, elem: u32, len: u64, contents: Option<Vec<i64>>| {
        let name = format!("a{}", k.arrays.len());
        let mut d = ArrayDecl::new(&name, elem, len, next_base);
        if let Some(c) = contents {
            d = d.with_contents(c);
        }
        next_base += (d.byte_len() + (1 << 16)).next_power_of_two();
        k.arrays.push(d);
        name
    };
    let mut id = || {
        next_id += 1;
        InstrId(next_id - 1)
    };
    let affine_len = |scale: i64, offset: i64| (scale as u64) * (n - 1) + offset as u64 + 1;
    for p in pieces {
        match p {
            Piece::AddrCalc { cost, chained } => {
                let inputs = match (chained, addrcalcs.last()) {
                    (true, Some(&a)) => vec![a],
                    _ => vec![],
                };
                let i = id();
                k.body.push(Instr::new(
                    i.0,
                    Op::AddrCalc {
                        inputs,
                        cost: *cost,
                    },
                ));
                addrcalcs.push(i);
                values.push(i);
            }
            Piece::Load {
                scale,
                offset,
                elem,
                via,
                pred,
            } => {
                let name = array(&mut k, *elem, affine_len(*scale, *offset), None);
                let mut addr = AddressExpr::affine(name, *scale, *offset);
                if let (true, Some(&a)) = (via, addrcalcs.last()) {
                    addr = addr.via([a]);
                }
                let i = id();
                let mut ins = Instr::new(i.0, Op::Load { addr });
                if let Some(p) = pred {
                    ins = ins.when(p);
                }
                k.body.push(ins);
                values.push(i);
            }
            Piece::Gather {
                table,
                scale,
                elem,
                via,
            } => {
                let contents: Vec<i64> = (0..n)
                    .map(|j| table[(j % table.len() as u64) as usize])
                    .collect();
                let idx = array(&mut k, 4, n, Some(contents));
                let data = array(&mut k, *elem, (32 * scale + 2) as u64, None);
                let li = id();
                k.body.push(Instr::new(
                    li.0,
                    Op::Load {
                        addr: AddressExpr::affine(idx, 1, 0),
                    },
                ));
                let mut addr = AddressExpr::indirect(data, li, *scale, 1);
                if *via {
                    let c = id();
                    k.body.push(Instr::new(
                        c.0,
                        Op::AddrCalc {
                            inputs: vec![li],
                            cost: 1,
                        },
                    ));
                    addrcalcs.push(c);
                    addr = addr.via([c]);
                }
                let gi = id();
                k.body.push(Instr::new(gi.0, Op::Load { addr }));
                values.push(li);
                values.push(gi);
            }
            Piece::Compute { cost, fan_in, pred } => {
                let inputs: Vec<InstrId> = values.iter().rev().take(*fan_in).copied().collect();
                let i = id();
                let mut ins = Instr::new(
                    i.0,
                    Op::Compute {
                        inputs,
                        cost: *cost,
                    },
                );
                if let Some(p) = pred {
                    ins = ins.when(p);
                }
                k.body.push(ins);
                values.push(i);
            }
            Piece::Store {
                scale,
                offset,
                pred,
            } => {
                let name = array(&mut k, 8, affine_len(*scale, *offset), None);
                let i = id();
                let mut ins = Instr::new(
                    i.0,
                    Op::Store {
                        addr: AddressExpr::affine(name, *scale, *offset),
                        source: values.last().copied(),
                    },
                );
                if let Some(p) = pred {
                    ins = ins.when(p);
                }
                k.body.push(ins);
            }
        }
    }
    k
}

/// A random valid kernel with 1..=`max_n` iterations and up to `max_pieces`
/// body pieces.
pub fn kernel(max_n: u64, max_pieces: usize) -> impl Strategy<Value = ValidatedKernel> {
    (
        1..=max_n,
        prop::collection::vec(piece(), 1..=max_pieces),
        1u32..3,
    )
        .prop_map(|(n, pieces, inv)| {
            let spec = build(n, &pieces).invocations(inv);
            validate_kernel(spec).expect("generated kernels are valid")
        })
}
