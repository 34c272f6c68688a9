//! Loop-kernel instruction IR.
//!
//! A kernel is one hot loop: `iterations` trips over a straight-line body of
//! [`Instr`]s, optionally invoked several times back to back. Instructions
//! carry abstract op costs for timing and [`AddressExpr`]s that resolve to
//! byte addresses inside declared arrays. Values are never computed except
//! where they feed an address: a load used as an index reads the declared
//! contents of its array.

pub(crate) mod text;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::ops::Range;
use std::sync::Arc;

pub use text::{parse_kernel, print_kernel};

use crate::error::KernelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InstrId(pub u32);

impl fmt::Display for InstrId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "%{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArrayDecl {
    pub name: String,
    pub elem_bytes: u32,
    pub len: u64,
    pub base: u64,
    /// Element values, required for arrays read through indirection.
    pub contents: Option<Arc<[i64]>>,
}

impl ArrayDecl {
    pub fn new(name: impl Into<String>, elem_bytes: u32, len: u64, base: u64) -> Self {
        ArrayDecl {
            name: name.into(),
            elem_bytes,
            len,
            base,
            contents: None,
        }
    }

    pub fn with_contents(mut self, contents: Vec<i64>) -> Self {
        self.contents = Some(contents.into());
        self
    }

    pub fn byte_len(&self) -> u64 {
        self.len * u64::from(self.elem_bytes)
    }

    pub fn end(&self) -> u64 {
        self.base + self.byte_len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexExpr {
    /// `scale * i + offset`
    Affine { scale: i64, offset: i64 },
    /// `scale * value(load) + offset`
    Indirect {
        load: InstrId,
        scale: i64,
        offset: i64,
    },
}

impl IndexExpr {
    pub fn affine(scale: i64, offset: i64) -> Self {
        IndexExpr::Affine { scale, offset }
    }

    pub fn indirect(load: InstrId) -> Self {
        IndexExpr::Indirect {
            load,
            scale: 1,
            offset: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AddressExpr {
    pub array: String,
    pub index: IndexExpr,
    /// Address-calculation instructions whose results this address consumes.
    pub via: Vec<InstrId>,
}

impl AddressExpr {
    pub fn affine(array: impl Into<String>, scale: i64, offset: i64) -> Self {
        AddressExpr {
            array: array.into(),
            index: IndexExpr::affine(scale, offset),
            via: Vec::new(),
        }
    }

    pub fn indirect(array: impl Into<String>, load: InstrId, scale: i64, offset: i64) -> Self {
        AddressExpr {
            array: array.into(),
            index: IndexExpr::Indirect {
                load,
                scale,
                offset,
            },
            via: Vec::new(),
        }
    }

    pub fn via(mut self, ids: impl IntoIterator<Item = InstrId>) -> Self {
        self.via.extend(ids);
        self
    }

    /// Every instruction the address depends on.
    pub fn deps(&self) -> impl Iterator<Item = InstrId> + '_ {
        let indirect = match self.index {
            IndexExpr::Indirect { load, .. } => Some(load),
            IndexExpr::Affine { .. } => None,
        };
        self.via.iter().copied().chain(indirect)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Op {
    AddrCalc {
        inputs: Vec<InstrId>,
        cost: u32,
    },
    Load {
        addr: AddressExpr,
    },
    Store {
        addr: AddressExpr,
        source: Option<InstrId>,
    },
    Compute {
        inputs: Vec<InstrId>,
        cost: u32,
    },
    Prefetch {
        addr: AddressExpr,
    },
}

impl Op {
    pub fn address(&self) -> Option<&AddressExpr> {
        match self {
            Op::Load { addr } | Op::Store { addr, .. } | Op::Prefetch { addr } => Some(addr),
            Op::AddrCalc { .. } | Op::Compute { .. } => None,
        }
    }

    pub fn produces_value(&self) -> bool {
        matches!(
            self,
            Op::AddrCalc { .. } | Op::Load { .. } | Op::Compute { .. }
        )
    }

    /// All operand references, address dependencies included.
    pub fn operands(&self) -> Vec<InstrId> {
        match self {
            Op::AddrCalc { inputs, .. } | Op::Compute { inputs, .. } => inputs.clone(),
            Op::Load { addr } | Op::Prefetch { addr } => addr.deps().collect(),
            Op::Store { addr, source } => addr.deps().chain(source.iter().copied()).collect(),
        }
    }

    pub fn mnemonic(&self) -> &'static str {
        match self {
            Op::AddrCalc { .. } => "addrcalc",
            Op::Load { .. } => "load",
            Op::Store { .. } => "store",
            Op::Compute { .. } => "compute",
            Op::Prefetch { .. } => "prefetch",
        }
    }
}

/// Per-iteration predicate: the instruction runs on iteration `i` when
/// `pattern[i % pattern.len()]` is set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Predicate {
    pub pattern: Vec<bool>,
}

impl Predicate {
    pub fn active(&self, iteration: u64) -> bool {
        self.pattern[(iteration % self.pattern.len() as u64) as usize]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instr {
    pub id: InstrId,
    pub op: Op,
    pub predicate: Option<Predicate>,
}

impl Instr {
    pub fn new(id: u32, op: Op) -> Self {
        Instr {
            id: InstrId(id),
            op,
            predicate: None,
        }
    }

    pub fn when(mut self, pattern: &[bool]) -> Self {
        self.predicate = Some(Predicate {
            pattern: pattern.to_vec(),
        });
        self
    }

    pub fn active(&self, iteration: u64) -> bool {
        self.predicate.as_ref().is_none_or(|p| p.active(iteration))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KernelSpec {
    pub name: String,
    /// Loop trip count per invocation.
    pub iterations: u64,
    /// How many times the whole loop runs back to back.
    pub invocations: u32,
    pub arrays: Vec<ArrayDecl>,
    pub body: Vec<Instr>,
}

impl KernelSpec {
    pub fn new(name: impl Into<String>, iterations: u64) -> Self {
        KernelSpec {
            name: name.into(),
            iterations,
            invocations: 1,
            arrays: Vec::new(),
            body: Vec::new(),
        }
    }

    pub fn array(mut self, decl: ArrayDecl) -> Self {
        self.arrays.push(decl);
        self
    }

    pub fn instr(mut self, instr: Instr) -> Self {
        self.body.push(instr);
        self
    }

    pub fn invocations(mut self, n: u32) -> Self {
        self.invocations = n;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AccessKind {
    Load,
    Store,
    Prefetch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceEntry {
    pub iteration: u64,
    pub instr: InstrId,
    pub address: u64,
    pub kind: AccessKind,
}

/// A kernel whose invariants have been checked. Cheap to clone.
#[derive(Debug, Clone)]
pub struct ValidatedKernel {
    spec: Arc<KernelSpec>,
    positions: Arc<HashMap<InstrId, usize>>,
    /// Array index for each body position that carries an address.
    array_of: Arc<Vec<Option<usize>>>,
}

impl PartialEq for ValidatedKernel {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
    }
}

/// Checks every kernel invariant. Prefetches are rejected: they only appear
/// in kernels derived by the transform.
pub fn validate_kernel(kernel: KernelSpec) -> Result<ValidatedKernel, KernelError> {
    validate_impl(kernel, false)
}

pub(crate) fn validate_derived(kernel: KernelSpec) -> Result<ValidatedKernel, KernelError> {
    validate_impl(kernel, true)
}

fn validate_impl(kernel: KernelSpec, allow_prefetch: bool) -> Result<ValidatedKernel, KernelError> {
    if kernel.iterations == 0 {
        return Err(KernelError::ZeroIterations(kernel.name));
    }
    if kernel.invocations == 0 {
        return Err(KernelError::ZeroInvocations(kernel.name));
    }
    if kernel.body.is_empty() {
        return Err(KernelError::EmptyBody(kernel.name));
    }

    let mut array_names: HashMap<&str, usize> = HashMap::new();
    for (i, a) in kernel.arrays.iter().enumerate() {
        if array_names.insert(a.name.as_str(), i).is_some() {
            return Err(KernelError::DuplicateArray(a.name.clone()));
        }
        if a.elem_bytes == 0 || a.len == 0 {
            return Err(KernelError::BadArray(
                a.name.clone(),
                "element size and length must be positive".into(),
            ));
        }
        if let Some(c) = &a.contents {
            if c.len() as u64 != a.len {
                return Err(KernelError::BadArray(
                    a.name.clone(),
                    format!("{} values declared for length {}", c.len(), a.len),
                ));
            }
        }
    }
    let mut by_base: Vec<&ArrayDecl> = kernel.arrays.iter().collect();
    by_base.sort_by_key(|a| a.base);
    for w in by_base.windows(2) {
        if w[0].end() > w[1].base {
            return Err(KernelError::OverlappingArrays(
                w[0].name.clone(),
                w[1].name.clone(),
            ));
        }
    }

    let mut all_ids = HashSet::new();
    for instr in &kernel.body {
        if !all_ids.insert(instr.id) {
            return Err(KernelError::DuplicateId(instr.id));
        }
    }

    let mut positions: HashMap<InstrId, usize> = HashMap::new();
    let mut array_of = Vec::with_capacity(kernel.body.len());
    for (pos, instr) in kernel.body.iter().enumerate() {
        let id = instr.id;
        if let Some(p) = &instr.predicate {
            if p.pattern.is_empty() {
                return Err(KernelError::EmptyPredicate(id));
            }
        }
        let defined = |used: InstrId| -> Result<&Instr, KernelError> {
            positions
                .get(&used)
                .map(|&p| &kernel.body[p])
                .ok_or(KernelError::UseBeforeDef { user: id, used })
        };
        match &instr.op {
            Op::AddrCalc { inputs, cost } | Op::Compute { inputs, cost } => {
                if *cost == 0 {
                    return Err(KernelError::ZeroCost(id));
                }
                for &used in inputs {
                    if !defined(used)?.op.produces_value() {
                        return Err(KernelError::BadOperand {
                            user: id,
                            used,
                            why: "operand produces no value",
                        });
                    }
                }
            }
            Op::Store {
                source: Some(used), ..
            } => {
                if !defined(*used)?.op.produces_value() {
                    return Err(KernelError::BadOperand {
                        user: id,
                        used: *used,
                        why: "stored operand produces no value",
                    });
                }
            }
            Op::Prefetch { .. } if !allow_prefetch => {
                return Err(KernelError::PrefetchInSource(id));
            }
            _ => {}
        }
        let mut slot = None;
        if let Some(addr) = instr.op.address() {
            for &used in &addr.via {
                if !matches!(defined(used)?.op, Op::AddrCalc { .. }) {
                    return Err(KernelError::BadOperand {
                        user: id,
                        used,
                        why: "address operands must be address calculations",
                    });
                }
            }
            if let IndexExpr::Indirect { load, .. } = addr.index {
                let src = defined(load)?;
                let Op::Load { addr: src_addr } = &src.op else {
                    return Err(KernelError::BadOperand {
                        user: id,
                        used: load,
                        why: "indirect index must come from a load",
                    });
                };
                if src.predicate.is_some() {
                    return Err(KernelError::BadOperand {
                        user: id,
                        used: load,
                        why: "indirect index load must not be predicated",
                    });
                }
                let src_array = &kernel.arrays[array_names[src_addr.array.as_str()]];
                if src_array.contents.is_none() {
                    return Err(KernelError::MissingContents {
                        instr: id,
                        array: src_array.name.clone(),
                    });
                }
            }
            let Some(&ai) = array_names.get(addr.array.as_str()) else {
                return Err(KernelError::UnknownArray {
                    instr: id,
                    array: addr.array.clone(),
                });
            };
            slot = Some(ai);
        }
        array_of.push(slot);
        positions.insert(id, pos);
    }

    let vk = ValidatedKernel {
        spec: Arc::new(kernel),
        positions: Arc::new(positions),
        array_of: Arc::new(array_of),
    };
    vk.check_bounds()?;
    Ok(vk)
}

impl ValidatedKernel {
    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn iterations(&self) -> u64 {
        self.spec.iterations
    }

    pub fn invocations(&self) -> u32 {
        self.spec.invocations
    }

    pub fn body(&self) -> &[Instr] {
        &self.spec.body
    }

    pub fn arrays(&self) -> &[ArrayDecl] {
        &self.spec.arrays
    }

    /// Topological position of an instruction in the body.
    pub fn position(&self, id: InstrId) -> Option<usize> {
        self.positions.get(&id).copied()
    }

    pub fn instr(&self, id: InstrId) -> Option<&Instr> {
        self.position(id).map(|p| &self.spec.body[p])
    }

    pub fn array_at(&self, pos: usize) -> Option<&ArrayDecl> {
        self.array_of[pos].map(|a| &self.spec.arrays[a])
    }

    /// Shares the arrays and iteration space with a different body.
    pub(crate) fn derive(&self, name: String, body: Vec<Instr>) -> Result<Self, KernelError> {
        validate_derived(KernelSpec {
            name,
            iterations: self.spec.iterations,
            invocations: self.spec.invocations,
            arrays: self.spec.arrays.clone(),
            body,
        })
    }

    /// A kernel with this iteration space and no body (loop control only).
    pub(crate) fn derive_empty(&self, name: String) -> Self {
        ValidatedKernel {
            spec: Arc::new(KernelSpec {
                name,
                iterations: self.spec.iterations,
                invocations: self.spec.invocations,
                arrays: self.spec.arrays.clone(),
                body: Vec::new(),
            }),
            positions: Arc::new(HashMap::new()),
            array_of: Arc::new(Vec::new()),
        }
    }

    fn check_bounds(&self) -> Result<(), KernelError> {
        let mut values = vec![0i64; self.body().len()];
        for i in 0..self.iterations() {
            for (pos, instr) in self.body().iter().enumerate() {
                let Some(addr) = instr.op.address() else {
                    continue;
                };
                let array = self.array_at(pos).expect("validated address");
                let index = self.index_value(addr, i, &values);
                if index < 0 || index as u64 >= array.len {
                    return Err(KernelError::OutOfBoundsAddress {
                        instr: instr.id,
                        array: array.name.clone(),
                        iteration: i,
                        index,
                    });
                }
                if let (Op::Load { .. }, Some(c)) = (&instr.op, &array.contents) {
                    values[pos] = c[index as usize];
                }
            }
        }
        Ok(())
    }

    fn index_value(&self, addr: &AddressExpr, iteration: u64, values: &[i64]) -> i64 {
        match addr.index {
            IndexExpr::Affine { scale, offset } => scale * iteration as i64 + offset,
            IndexExpr::Indirect {
                load,
                scale,
                offset,
            } => scale * values[self.positions[&load]] + offset,
        }
    }

    fn check_range(&self, range: &Range<u64>) -> Result<(), KernelError> {
        if range.start > range.end || range.end > self.iterations() {
            return Err(KernelError::RangeOutOfBounds {
                start: range.start,
                end: range.end,
                iterations: self.iterations(),
            });
        }
        Ok(())
    }

    /// Walks the iterations in `range`, handing every active instruction and
    /// its resolved byte address (if it has one) to `f`.
    pub(crate) fn walk(
        &self,
        range: Range<u64>,
        mut f: impl FnMut(u64, usize, &Instr, Option<u64>),
    ) -> Result<(), KernelError> {
        self.check_range(&range)?;
        let mut values = vec![0i64; self.body().len()];
        for i in range {
            for (pos, instr) in self.body().iter().enumerate() {
                // Indirection sources are unpredicated, so their values are
                // always current.
                let address = instr.op.address().map(|addr| {
                    let array = self.array_at(pos).expect("validated address");
                    let index = self.index_value(addr, i, &values);
                    if let (Op::Load { .. }, Some(c)) = (&instr.op, &array.contents) {
                        values[pos] = c[index as usize];
                    }
                    array.base + u64::from(array.elem_bytes) * index as u64
                });
                if instr.active(i) {
                    f(i, pos, instr, address);
                }
            }
        }
        Ok(())
    }
}

/// Every memory access of the iterations in `range`, in program order.
pub fn trace_addresses(
    kernel: &ValidatedKernel,
    range: Range<u64>,
) -> Result<Vec<TraceEntry>, KernelError> {
    let mut out = Vec::new();
    kernel.walk(range, |iteration, _, instr, address| {
        let kind = match instr.op {
            Op::Load { .. } => AccessKind::Load,
            Op::Store { .. } => AccessKind::Store,
            Op::Prefetch { .. } => AccessKind::Prefetch,
            _ => return,
        };
        out.push(TraceEntry {
            iteration,
            instr: instr.id,
            address: address.expect("memory op has an address"),
            kind,
        });
    })?;
    Ok(out)
}

/// The minimal set of instructions needed to compute every load address:
/// address calculations feeding loads, loads used as indices, and whatever
/// those depend on, transitively.
pub fn backward_address_slice(kernel: &ValidatedKernel) -> BTreeSet<InstrId> {
    let mut slice = BTreeSet::new();
    let mut work: Vec<InstrId> = kernel
        .body()
        .iter()
        .filter_map(|i| match &i.op {
            Op::Load { addr } | Op::Prefetch { addr } => Some(addr.deps().collect::<Vec<_>>()),
            _ => None,
        })
        .flatten()
        .collect();
    while let Some(id) = work.pop() {
        if !slice.insert(id) {
            continue;
        }
        let instr = kernel.instr(id).expect("validated operand");
        work.extend(instr.op.operands());
    }
    slice
}

/// Load-address stream of `range` computed using only the values of the
/// instructions in `keep`; every load contributes its address. Fails when an
/// address needs a value outside `keep`.
pub fn load_addresses_using(
    kernel: &ValidatedKernel,
    keep: &BTreeSet<InstrId>,
    range: Range<u64>,
) -> Result<Vec<u64>, KernelError> {
    for instr in kernel.body() {
        let needed = match &instr.op {
            Op::Load { addr } => addr.deps().collect(),
            _ if keep.contains(&instr.id) => instr.op.operands(),
            _ => Vec::new(),
        };
        if let Some(&missing) = needed.iter().find(|d| !keep.contains(d)) {
            return Err(KernelError::MissingDependency {
                instr: instr.id,
                missing,
            });
        }
    }
    let mut out = Vec::new();
    kernel.walk(range, |_, _, instr, address| {
        if let Op::Load { .. } = instr.op {
            out.push(address.expect("load has an address"));
        }
    })?;
    Ok(out)
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// `c[i] = a[i+1] + b[i+2]`
    pub fn fig3(n: u64) -> KernelSpec {
        KernelSpec::new("fig3", n)
            .array(ArrayDecl::new("a", 8, n + 2, 0x1000))
            .array(ArrayDecl::new("b", 8, n + 2, 0x10_0000))
            .array(ArrayDecl::new("c", 8, n, 0x20_0000))
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
                    addr: AddressExpr::affine("a", 1, 1).via([InstrId(1)]),
                },
            ))
            .instr(Instr::new(
                3,
                Op::AddrCalc {
                    inputs: vec![],
                    cost: 1,
                },
            ))
            .instr(Instr::new(
                4,
                Op::Load {
                    addr: AddressExpr::affine("b", 1, 2).via([InstrId(3)]),
                },
            ))
            .instr(Instr::new(
                5,
                Op::Compute {
                    inputs: vec![InstrId(2), InstrId(4)],
                    cost: 1,
                },
            ))
            .instr(Instr::new(
                6,
                Op::Store {
                    addr: AddressExpr::affine("c", 1, 0),
                    source: Some(InstrId(5)),
                },
            ))
    }

    /// `v = data[idx[i]]`, with the index load feeding the second address.
    pub fn indirect(idx: Vec<i64>) -> KernelSpec {
        let n = idx.len() as u64;
        KernelSpec::new("indirect", n)
            .array(ArrayDecl::new("idx", 4, n, 0x1000).with_contents(idx))
            .array(ArrayDecl::new("data", 8, 64, 0x8000))
            .array(ArrayDecl::new("out", 8, n, 0x10000))
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
                    addr: AddressExpr::affine("idx", 1, 0).via([InstrId(1)]),
                },
            ))
            .instr(Instr::new(
                3,
                Op::AddrCalc {
                    inputs: vec![InstrId(2)],
                    cost: 1,
                },
            ))
            .instr(Instr::new(
                4,
                Op::Load {
                    addr: AddressExpr::indirect("data", InstrId(2), 1, 0).via([InstrId(3)]),
                },
            ))
            .instr(Instr::new(
                5,
                Op::Store {
                    addr: AddressExpr::affine("out", 1, 0),
                    source: Some(InstrId(4)),
                },
            ))
    }

    pub fn pure_compute(n: u64, ops: u32) -> KernelSpec {
        let mut k = KernelSpec::new("compute", n);
        for id in 1..=ops {
            k = k.instr(Instr::new(
                id,
                Op::Compute {
                    inputs: vec![],
                    cost: 1,
                },
            ));
        }
        k
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn fig3_is_valid() {
        let k = validate_kernel(fig3(100)).unwrap();
        assert_eq!(k.position(InstrId(5)), Some(4));
    }

    #[test]
    fn minimal_kernel_is_valid() {
        validate_kernel(pure_compute(1, 1)).unwrap();
    }

    #[test]
    fn unknown_array_in_store() {
        let mut k = fig3(10);
        k.body[5] = Instr::new(
            6,
            Op::Store {
                addr: AddressExpr::affine("zz", 1, 0),
                source: None,
            },
        );
        assert_eq!(
            validate_kernel(k).unwrap_err(),
            KernelError::UnknownArray {
                instr: InstrId(6),
                array: "zz".into()
            }
        );
    }

    #[test]
    fn use_before_def() {
        let k = KernelSpec::new("k", 4)
            .instr(Instr::new(
                1,
                Op::Compute {
                    inputs: vec![InstrId(2)],
                    cost: 1,
                },
            ))
            .instr(Instr::new(
                2,
                Op::Compute {
                    inputs: vec![],
                    cost: 1,
                },
            ));
        assert_eq!(
            validate_kernel(k).unwrap_err(),
            KernelError::UseBeforeDef {
                user: InstrId(1),
                used: InstrId(2)
            }
        );
    }

    #[test]
    fn out_of_bounds_reports_iteration() {
        let mut k = fig3(10);
        k.arrays[0].len = 5;
        assert_eq!(
            validate_kernel(k).unwrap_err(),
            KernelError::OutOfBoundsAddress {
                instr: InstrId(2),
                array: "a".into(),
                iteration: 4,
                index: 5
            }
        );
    }

    #[test]
    fn overlapping_arrays_rejected() {
        let mut k = fig3(10);
        k.arrays[1].base = 0x1008;
        assert!(matches!(
            validate_kernel(k),
            Err(KernelError::OverlappingArrays(..))
        ));
    }

    #[test]
    fn prefetch_only_from_transform() {
        let k = fig3(4).instr(Instr::new(
            9,
            Op::Prefetch {
                addr: AddressExpr::affine("a", 1, 0),
            },
        ));
        assert_eq!(
            validate_kernel(k).unwrap_err(),
            KernelError::PrefetchInSource(InstrId(9))
        );
    }

    #[test]
    fn indirect_needs_contents() {
        let mut k = indirect(vec![0, 1]);
        k.arrays[0].contents = None;
        assert!(matches!(
            validate_kernel(k),
            Err(KernelError::MissingContents { .. })
        ));
    }

    #[test]
    fn slice_of_fig3_is_the_two_addrcalcs() {
        let k = validate_kernel(fig3(100)).unwrap();
        let s = backward_address_slice(&k);
        assert_eq!(s, BTreeSet::from([InstrId(1), InstrId(3)]));
    }

    #[test]
    fn slice_of_pure_compute_is_empty() {
        let k = validate_kernel(pure_compute(8, 3)).unwrap();
        assert!(backward_address_slice(&k).is_empty());
    }

    #[test]
    fn slice_follows_indirection() {
        // Def-use closure by hand: load %4 needs %3 (via) and %2 (index);
        // %3 consumes %2; %2 needs %1. Store %5 contributes nothing.
        let k = validate_kernel(indirect(vec![3, 1, 2])).unwrap();
        assert_eq!(
            backward_address_slice(&k),
            BTreeSet::from([InstrId(1), InstrId(2), InstrId(3)])
        );
    }

    #[test]
    fn trace_fig3_first_iteration() {
        let k = validate_kernel(fig3(100)).unwrap();
        let t = trace_addresses(&k, 0..1).unwrap();
        let got: Vec<_> = t.iter().map(|e| (e.iteration, e.address, e.kind)).collect();
        assert_eq!(
            got,
            vec![
                (0, 0x1000 + 8, AccessKind::Load),
                (0, 0x10_0000 + 16, AccessKind::Load),
                (0, 0x20_0000, AccessKind::Store),
            ]
        );
    }

    #[test]
    fn trace_strided() {
        let k = KernelSpec::new("strided", 4)
            .array(ArrayDecl::new("a", 8, 8, 0))
            .instr(Instr::new(
                1,
                Op::Load {
                    addr: AddressExpr::affine("a", 2, 0),
                },
            ));
        let k = validate_kernel(k).unwrap();
        let offs: Vec<_> = trace_addresses(&k, 0..4)
            .unwrap()
            .iter()
            .map(|e| e.address)
            .collect();
        assert_eq!(offs, vec![0, 16, 32, 48]);
    }

    #[test]
    fn trace_indirect_offsets() {
        let k = validate_kernel(indirect(vec![3, 1, 2])).unwrap();
        let data: Vec<_> = trace_addresses(&k, 0..3)
            .unwrap()
            .iter()
            .filter(|e| e.instr == InstrId(4))
            .map(|e| e.address - 0x8000)
            .collect();
        assert_eq!(data, vec![24, 8, 16]);
    }

    #[test]
    fn trace_range_checked() {
        let k = validate_kernel(fig3(10)).unwrap();
        assert!(matches!(
            trace_addresses(&k, 5..11),
            Err(KernelError::RangeOutOfBounds { .. })
        ));
    }

    #[test]
    fn predicated_instructions_skip_iterations() {
        let k = KernelSpec::new("p", 4)
            .array(ArrayDecl::new("a", 8, 4, 0))
            .instr(
                Instr::new(
                    1,
                    Op::Load {
                        addr: AddressExpr::affine("a", 1, 0),
                    },
                )
                .when(&[true, false]),
            );
        let k = validate_kernel(k).unwrap();
        let it: Vec<_> = trace_addresses(&k, 0..4)
            .unwrap()
            .iter()
            .map(|e| e.iteration)
            .collect();
        assert_eq!(it, vec![0, 2]);
    }

    #[test]
    fn slice_addresses_match_full_trace() {
        let k = validate_kernel(indirect(vec![3, 1, 2])).unwrap();
        let s = backward_address_slice(&k);
        let full: Vec<_> = trace_addresses(&k, 0..3)
            .unwrap()
            .into_iter()
            .filter(|e| e.kind == AccessKind::Load)
            .map(|e| e.address)
            .collect();
        assert_eq!(load_addresses_using(&k, &s, 0..3).unwrap(), full);
        for x in &s {
            let mut fewer = s.clone();
            fewer.remove(x);
            assert!(load_addresses_using(&k, &fewer, 0..3).is_err());
        }
    }
}
