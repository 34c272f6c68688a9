//! Kernel definition files.
//!
//! ```text
//! # c[i] = a[i+1] + b[i+2]
//! kernel fig3
//! iterations 100
//! invocations 1
//!
//! [arrays]
//! a elem=8 len=102 base=0x1000
//! idx elem=4 len=3 base=0x8000 data=3,1,2
//!
//! [body]
//! %1 = addrcalc cost=1
//! %2 = load a[i+1] via=%1
//! %3 = compute cost=2 in=%2
//! %4 = store c[2*i-1] from=%3 if=10
//! %5 = load data[4*%2+1]
//! ```
//!
//! Indices are affine in the loop index `i`, or in the value of an earlier
//! load (`%n`). `if=` takes a 0/1 pattern indexed by `i mod len`. `#` starts
//! a comment. `invocations` may be omitted and defaults to 1.
//! [`print_kernel`] emits the canonical form and `parse_kernel` inverts it.

use std::fmt::Write as _;

use super::{AddressExpr, ArrayDecl, IndexExpr, Instr, InstrId, KernelSpec, Op, Predicate};
use crate::error::ParseError;

#[derive(PartialEq)]
enum Section {
    Header,
    Arrays,
    Body,
}

pub fn parse_kernel(src: &str) -> Result<KernelSpec, ParseError> {
    let mut name = None;
    let mut iterations = None;
    let mut invocations = 1u32;
    let mut arrays = Vec::new();
    let mut body = Vec::new();
    let mut section = Section::Header;

    for (n, raw) in src.lines().enumerate() {
        let line_no = n + 1;
        let err = |message: String| ParseError {
            line: line_no,
            message,
        };
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        match line {
            "[arrays]" => {
                section = Section::Arrays;
                continue;
            }
            "[body]" => {
                section = Section::Body;
                continue;
            }
            _ => {}
        }
        match section {
            Section::Header => {
                let (key, value) = line
                    .split_once(char::is_whitespace)
                    .ok_or_else(|| err(format!("expected `key value`, got `{line}`")))?;
                let value = value.trim();
                match key {
                    "kernel" => name = Some(value.to_string()),
                    "iterations" => iterations = Some(parse_u64(value).map_err(err)?),
                    "invocations" => {
                        invocations = value
                            .parse()
                            .map_err(|_| err(format!("bad invocation count `{value}`")))?
                    }
                    other => return Err(err(format!("unknown header key `{other}`"))),
                }
            }
            Section::Arrays => arrays.push(parse_array(line).map_err(err)?),
            Section::Body => body.push(parse_instr(line).map_err(err)?),
        }
    }

    let missing = |what: &str| ParseError {
        line: 0,
        message: format!("missing `{what}` header"),
    };
    Ok(KernelSpec {
        name: name.ok_or_else(|| missing("kernel"))?,
        iterations: iterations.ok_or_else(|| missing("iterations"))?,
        invocations,
        arrays,
        body,
    })
}

fn parse_u64(s: &str) -> Result<u64, String> {
    let parsed = match s.strip_prefix("0x") {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => s.parse(),
    };
    parsed.map_err(|_| format!("bad integer `{s}`"))
}

fn parse_i64(s: &str) -> Result<i64, String> {
    s.parse().map_err(|_| format!("bad integer `{s}`"))
}

fn parse_array(line: &str) -> Result<ArrayDecl, String> {
    let mut parts = line.split_whitespace();
    let name = parts.next().ok_or("array name missing")?.to_string();
    let (mut elem, mut len, mut base, mut data) = (None, None, None, None);
    for kv in parts {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| format!("expected key=value, got `{kv}`"))?;
        match k {
            "elem" => elem = Some(parse_u64(v)? as u32),
            "len" => len = Some(parse_u64(v)?),
            "base" => base = Some(parse_u64(v)?),
            "data" => data = Some(v.split(',').map(parse_i64).collect::<Result<Vec<_>, _>>()?),
            _ => return Err(format!("unknown array attribute `{k}`")),
        }
    }
    let mut decl = ArrayDecl::new(
        name,
        elem.ok_or("array needs elem=")?,
        len.ok_or("array needs len=")?,
        base.ok_or("array needs base=")?,
    );
    if let Some(d) = data {
        decl = decl.with_contents(d);
    }
    Ok(decl)
}

fn parse_id(s: &str) -> Result<InstrId, String> {
    let n = s
        .strip_prefix('%')
        .ok_or_else(|| format!("expected instruction id, got `{s}`"))?;
    n.parse()
        .map(InstrId)
        .map_err(|_| format!("bad instruction id `{s}`"))
}

fn parse_ids(s: &str) -> Result<Vec<InstrId>, String> {
    s.split(',').map(parse_id).collect()
}

fn parse_instr(line: &str) -> Result<Instr, String> {
    let (lhs, rhs) = line
        .split_once('=')
        .ok_or_else(|| format!("expected `%id = op ...`, got `{line}`"))?;
    let id = parse_id(lhs.trim())?;
    let mut parts = rhs.split_whitespace();
    let mnemonic = parts.next().ok_or("missing opcode")?;
    let needs_addr = matches!(mnemonic, "load" | "store" | "prefetch");
    let addr_text = if needs_addr {
        Some(parts.next().ok_or("missing address")?)
    } else {
        None
    };

    let (mut cost, mut inputs, mut via, mut from, mut predicate) =
        (None, Vec::new(), Vec::new(), None, None);
    for kv in parts {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| format!("expected key=value, got `{kv}`"))?;
        match k {
            "cost" => cost = Some(parse_u64(v)? as u32),
            "in" => inputs = parse_ids(v)?,
            "via" => via = parse_ids(v)?,
            "from" => from = Some(parse_id(v)?),
            "if" => {
                let pattern = v
                    .chars()
                    .map(|c| match c {
                        '1' => Ok(true),
                        '0' => Ok(false),
                        _ => Err(format!("bad predicate pattern `{v}`")),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                predicate = Some(Predicate { pattern });
            }
            _ => return Err(format!("unknown attribute `{k}`")),
        }
    }
    let addr = addr_text
        .map(|t| parse_address(t).map(|a| a.via(via.iter().copied())))
        .transpose()?;

    let op = match mnemonic {
        "addrcalc" => Op::AddrCalc {
            inputs,
            cost: cost.ok_or("addrcalc needs cost=")?,
        },
        "compute" => Op::Compute {
            inputs,
            cost: cost.ok_or("compute needs cost=")?,
        },
        "load" => Op::Load {
            addr: addr.unwrap(),
        },
        "store" => Op::Store {
            addr: addr.unwrap(),
            source: from,
        },
        "prefetch" => Op::Prefetch {
            addr: addr.unwrap(),
        },
        other => return Err(format!("unknown opcode `{other}`")),
    };
    Ok(Instr { id, op, predicate })
}

fn parse_address(s: &str) -> Result<AddressExpr, String> {
    let (array, rest) = s
        .split_once('[')
        .ok_or_else(|| format!("expected `array[index]`, got `{s}`"))?;
    let index = rest
        .strip_suffix(']')
        .ok_or_else(|| format!("unterminated index in `{s}`"))?;
    Ok(AddressExpr {
        array: array.to_string(),
        index: parse_index(index)?,
        via: Vec::new(),
    })
}

/// Sum of signed terms: integers, `i`, `%n`, `k*i`, `k*%n`.
fn parse_index(s: &str) -> Result<IndexExpr, String> {
    let mut terms = Vec::new();
    let mut start = 0;
    for (pos, c) in s.char_indices() {
        if (c == '+' || c == '-') && pos > start {
            terms.push(&s[start..pos]);
            start = pos;
        }
    }
    terms.push(&s[start..]);

    let mut offset = 0i64;
    let mut var: Option<(Option<InstrId>, i64)> = None;
    for term in terms {
        let (sign, body) = match term.as_bytes().first() {
            Some(b'-') => (-1, &term[1..]),
            Some(b'+') => (1, &term[1..]),
            _ => (1, term),
        };
        if body.is_empty() {
            return Err(format!("empty term in index `{s}`"));
        }
        let (scale, name) = match body.split_once('*') {
            Some((k, v)) => (parse_i64(k)?, v),
            None if body == "i" || body.starts_with('%') => (1, body),
            None => {
                offset += sign * parse_i64(body)?;
                continue;
            }
        };
        if var.is_some() {
            return Err(format!("index `{s}` has more than one variable term"));
        }
        let source = if name == "i" {
            None
        } else {
            Some(parse_id(name)?)
        };
        var = Some((source, sign * scale));
    }
    Ok(match var {
        None => IndexExpr::Affine { scale: 0, offset },
        Some((None, scale)) => IndexExpr::Affine { scale, offset },
        Some((Some(load), scale)) => IndexExpr::Indirect {
            load,
            scale,
            offset,
        },
    })
}

fn fmt_index(index: &IndexExpr) -> String {
    let (var, scale, offset, indirect) = match *index {
        IndexExpr::Affine { scale, offset } => ("i".to_string(), scale, offset, false),
        IndexExpr::Indirect {
            load,
            scale,
            offset,
        } => (load.to_string(), scale, offset, true),
    };
    let mut out = match scale {
        0 if indirect => format!("0*{var}"),
        0 => String::new(),
        1 => var,
        -1 => format!("-{var}"),
        k => format!("{k}*{var}"),
    };
    if out.is_empty() {
        out = offset.to_string();
    } else if offset > 0 {
        let _ = write!(out, "+{offset}");
    } else if offset < 0 {
        let _ = write!(out, "{offset}");
    }
    out
}

fn fmt_ids(ids: &[InstrId]) -> String {
    ids.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

fn fmt_address(addr: &AddressExpr) -> String {
    let mut s = format!("{}[{}]", addr.array, fmt_index(&addr.index));
    if !addr.via.is_empty() {
        let _ = write!(s, " via={}", fmt_ids(&addr.via));
    }
    s
}

pub(crate) fn fmt_op(op: &Op) -> String {
    match op {
        Op::AddrCalc { inputs, cost } | Op::Compute { inputs, cost } => {
            let mut s = format!("{} cost={cost}", op.mnemonic());
            if !inputs.is_empty() {
                let _ = write!(s, " in={}", fmt_ids(inputs));
            }
            s
        }
        Op::Load { addr } | Op::Prefetch { addr } => {
            format!("{} {}", op.mnemonic(), fmt_address(addr))
        }
        Op::Store { addr, source } => {
            let mut s = format!("store {}", fmt_address(addr));
            if let Some(src) = source {
                let _ = write!(s, " from={src}");
            }
            s
        }
    }
}

pub fn print_kernel(k: &KernelSpec) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "kernel {}", k.name);
    let _ = writeln!(out, "iterations {}", k.iterations);
    let _ = writeln!(out, "invocations {}", k.invocations);
    out.push_str("\n[arrays]\n");
    for a in &k.arrays {
        let _ = write!(
            out,
            "{} elem={} len={} base={:#x}",
            a.name, a.elem_bytes, a.len, a.base
        );
        if let Some(c) = &a.contents {
            let vals: Vec<_> = c.iter().map(ToString::to_string).collect();
            let _ = write!(out, " data={}", vals.join(","));
        }
        out.push('\n');
    }
    out.push_str("\n[body]\n");
    for instr in &k.body {
        let _ = write!(out, "{} = {}", instr.id, fmt_op(&instr.op));
        if let Some(p) = &instr.predicate {
            let pat: String = p
                .pattern
                .iter()
                .map(|&b| if b { '1' } else { '0' })
                .collect();
            let _ = write!(out, " if={pat}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel_ir::fixtures;
    use proptest::prelude::*;

    #[test]
    fn parses_documented_example() {
        let src = "\
# demo
kernel demo
iterations 3

[arrays]
a elem=8 len=8 base=0x1000
idx elem=4 len=3 base=0x8000 data=3,1,2

[body]
%1 = addrcalc cost=1
%2 = load idx[i] via=%1
%3 = load a[2*%2-1]    # indirect
%4 = compute cost=2 in=%2,%3 if=10
%5 = store a[-i+7] from=%4
";
        let k = parse_kernel(src).unwrap();
        assert_eq!(k.iterations, 3);
        assert_eq!(k.invocations, 1);
        assert_eq!(k.arrays[1].contents.as_deref(), Some(&[3, 1, 2][..]));
        assert_eq!(
            k.body[2].op,
            Op::Load {
                addr: AddressExpr::indirect("a", InstrId(2), 2, -1)
            }
        );
        assert_eq!(
            k.body[3].predicate,
            Some(Predicate {
                pattern: vec![true, false]
            })
        );
        assert_eq!(
            k.body[4].op.address().unwrap().index,
            IndexExpr::affine(-1, 7)
        );
    }

    #[test]
    fn fixtures_round_trip() {
        for k in [
            fixtures::fig3(10),
            fixtures::indirect(vec![2, 0, 1]),
            fixtures::pure_compute(4, 2),
        ] {
            assert_eq!(parse_kernel(&print_kernel(&k)).unwrap(), k);
        }
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = parse_kernel("kernel x\niterations 2\n[body]\n%1 = frobnicate\n").unwrap_err();
        assert_eq!(e.line, 4);
        assert!(parse_kernel("[body]\n").is_err());
    }

    fn arb_index() -> impl Strategy<Value = IndexExpr> {
        prop_oneof![
            (-4i64..5, -20i64..20).prop_map(|(scale, offset)| IndexExpr::Affine { scale, offset }),
            (1u32..4, -3i64..4, -9i64..9).prop_map(|(l, scale, offset)| IndexExpr::Indirect {
                load: InstrId(l),
                scale,
                offset
            }),
        ]
    }

    fn arb_ids() -> impl Strategy<Value = Vec<InstrId>> {
        prop::collection::vec((1u32..50).prop_map(InstrId), 0..3)
    }

    fn arb_addr() -> impl Strategy<Value = AddressExpr> {
        (arb_index(), arb_ids()).prop_map(|(index, via)| AddressExpr {
            array: "arr".into(),
            index,
            via,
        })
    }

    fn arb_op() -> impl Strategy<Value = Op> {
        prop_oneof![
            (arb_ids(), 1u32..9).prop_map(|(inputs, cost)| Op::AddrCalc { inputs, cost }),
            (arb_ids(), 1u32..9).prop_map(|(inputs, cost)| Op::Compute { inputs, cost }),
            arb_addr().prop_map(|addr| Op::Load { addr }),
            arb_addr().prop_map(|addr| Op::Prefetch { addr }),
            (arb_addr(), prop::option::of((1u32..50).prop_map(InstrId)))
                .prop_map(|(addr, source)| Op::Store { addr, source }),
        ]
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(
            ops in prop::collection::vec((arb_op(), prop::option::of(prop::collection::vec(any::<bool>(), 1..5))), 1..8),
            iterations in 1u64..1000,
            invocations in 1u32..20,
            data in prop::option::of(prop::collection::vec(-100i64..100, 1..6)),
        ) {
            let mut arr = ArrayDecl::new("arr", 8, data.as_ref().map_or(3, |d| d.len() as u64), 0x40);
            if let Some(d) = data {
                arr = arr.with_contents(d);
            }
            let mut k = KernelSpec::new("rt", iterations).invocations(invocations).array(arr);
            for (i, (op, pat)) in ops.into_iter().enumerate() {
                k.body.push(Instr { id: InstrId(i as u32 + 1), op, predicate: pat.map(|pattern| Predicate { pattern }) });
            }
            prop_assert_eq!(parse_kernel(&print_kernel(&k)).unwrap(), k);
        }
    }
}
