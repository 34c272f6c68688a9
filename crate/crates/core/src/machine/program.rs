use std::ops::Range;

use smallvec::SmallVec;

use crate::error::KernelError;
use crate::kernel_ir::{Op, ValidatedKernel};
use crate::transform::INNER_LOOP_OPS;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DynKind {
    /// A dependent chain of this many single-cycle ALU ops.
    Alu(u32),
    Load(u64),
    Store(u64),
    Prefetch(u64),
}

/// One dynamic op with the indices of the ops it waits for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DynInstr {
    pub kind: DynKind,
    pub deps: SmallVec<[u32; 4]>,
}

/// The dynamic op stream of one inner-loop slice. Every iteration starts with
/// its loop-control op, which depends on the previous iteration's. A
/// multi-op AddrCalc or Compute is a serial chain and stays a single
/// [`DynKind::Alu`] carrying its length.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SliceProgram {
    pub instrs: Vec<DynInstr>,
    pub prefetches: u32,
    /// Instructions the program retires: the sum of op weights.
    pub retired: u64,
}

impl DynKind {
    /// Instructions retired, and cycles of a dedicated issue slot held.
    pub fn weight(self) -> u32 {
        match self {
            DynKind::Alu(c) => c,
            _ => 1,
        }
    }
}

impl SliceProgram {
    pub fn lower(kernel: &ValidatedKernel, range: Range<u64>) -> Result<Self, KernelError> {
        assert_eq!(
            INNER_LOOP_OPS, 1,
            "lowering emits one loop-control op per iteration"
        );
        let mut prog = SliceProgram::default();
        let mut last: Vec<Option<u32>> = vec![None; kernel.body().len()];
        let mut loop_op: Option<u32> = None;
        let mut next_iter = range.start;
        kernel.walk(range.clone(), |i, pos, instr, address| {
            while next_iter <= i {
                loop_op = Some(prog.push(DynKind::Alu(1), loop_op.iter().copied().collect()));
                last.iter_mut().for_each(|l| *l = None);
                next_iter += 1;
            }
            let mut deps: SmallVec<[u32; 4]> = loop_op.iter().copied().collect();
            for id in instr.op.operands() {
                let p = kernel.position(id).expect("validated operand");
                if let Some(d) = last[p] {
                    if !deps.contains(&d) {
                        deps.push(d);
                    }
                }
            }
            let idx = match instr.op {
                Op::AddrCalc { cost, .. } | Op::Compute { cost, .. } => {
                    prog.push(DynKind::Alu(cost), deps)
                }
                Op::Load { .. } => prog.push(DynKind::Load(address.expect("address")), deps),
                Op::Store { .. } => prog.push(DynKind::Store(address.expect("address")), deps),
                Op::Prefetch { .. } => {
                    prog.prefetches += 1;
                    prog.push(DynKind::Prefetch(address.expect("address")), deps)
                }
            };
            last[pos] = Some(idx);
        })?;
        while next_iter < range.end {
            loop_op = Some(prog.push(DynKind::Alu(1), loop_op.iter().copied().collect()));
            next_iter += 1;
        }
        Ok(prog)
    }

    fn push(&mut self, kind: DynKind, deps: SmallVec<[u32; 4]>) -> u32 {
        let idx = self.instrs.len() as u32;
        self.instrs.push(DynInstr { kind, deps });
        self.retired += u64::from(kind.weight());
        idx
    }

    pub fn len(&self) -> usize {
        self.instrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instrs.is_empty()
    }

    pub fn loads(&self) -> impl Iterator<Item = u64> + '_ {
        self.instrs.iter().filter_map(|d| match d.kind {
            DynKind::Load(a) => Some(a),
            _ => None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel_ir::fixtures::*;
    use crate::kernel_ir::{validate_kernel, Instr, KernelSpec};

    #[test]
    fn fig3_lowering_shape() {
        let k = validate_kernel(fig3(4)).unwrap();
        let p = SliceProgram::lower(&k, 1..3).unwrap();
        // loop, addr, load, addr, load, compute, store per iteration
        assert_eq!(p.len(), 14);
        assert_eq!(p.instrs[0].deps.as_slice(), &[] as &[u32]);
        assert_eq!(p.instrs[7].deps.as_slice(), &[0]);
        assert_eq!(p.instrs[2].kind, DynKind::Load(0x1000 + 8 * 2));
        assert_eq!(p.instrs[5].deps.as_slice(), &[0, 2, 4]);
        assert_eq!(p.loads().count(), 4);
    }

    #[test]
    fn cost_becomes_weighted_op() {
        let k = validate_kernel(KernelSpec::new("chain", 2).instr(Instr::new(
            1,
            Op::Compute {
                inputs: vec![],
                cost: 3,
            },
        )))
        .unwrap();
        let p = SliceProgram::lower(&k, 0..2).unwrap();
        assert_eq!(p.len(), 2 * 2);
        assert_eq!(p.instrs[1].kind, DynKind::Alu(3));
        assert_eq!(p.instrs[1].deps.as_slice(), &[0]);
        assert_eq!(p.instrs[2].deps.as_slice(), &[0]);
        assert_eq!(p.retired, 2 * 4);
    }

    #[test]
    fn compute_ops_depend_on_loop_control() {
        let k = validate_kernel(pure_compute(3, 2)).unwrap();
        let p = SliceProgram::lower(&k, 0..3).unwrap();
        assert_eq!(p.len(), 3 * 3);
        assert_eq!(p.instrs[2].deps.as_slice(), &[0]);
    }

    #[test]
    fn indirect_dep_is_the_index_load() {
        let k = validate_kernel(indirect(vec![3, 1, 2])).unwrap();
        let p = SliceProgram::lower(&k, 0..1).unwrap();
        assert_eq!(p.instrs[4].kind, DynKind::Load(0x8000 + 24));
        assert!(p.instrs[4].deps.contains(&2));
        assert!(p.instrs[4].deps.contains(&3));
    }
}
