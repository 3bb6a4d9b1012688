//! Seeded synthetic program generators.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ir::{ArrayView, BaseArray, DType, Instruction, Opcode, Operand, Program, SliceSpec};

pub const GENERATORS: [&str; 4] = ["chain", "stencil", "random-dag", "fan"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BenchSpec {
    pub generator: String,
    pub ops: usize,
    /// Number of base arrays (random-dag only).
    pub bases: usize,
    /// Element count of the arrays.
    pub size: u64,
    pub dtype: DType,
    pub seed: u64,
}

impl Default for BenchSpec {
    fn default() -> Self {
        BenchSpec { generator: "chain".into(), ops: 10, bases: 3, size: 4, dtype: DType::U8, seed: 0 }
    }
}

pub fn generate(spec: &BenchSpec) -> Result<Program, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    match spec.generator.as_str() {
        "chain" => chain(spec, &mut rng),
        "stencil" => stencil(spec),
        "random-dag" => random_dag(spec, &mut rng),
        "fan" => fan(spec),
        other => Err(format!("unknown generator `{}`", other)),
    }
}

fn whole(b: usize, bases: &[BaseArray]) -> ArrayView {
    ArrayView::whole(b, &bases[b])
}

fn range(b: usize, bases: &[BaseArray], lo: i64, hi: i64) -> ArrayView {
    ArrayView::slice(b, &bases[b], &[SliceSpec::range(lo, hi)]).expect("generator view in bounds")
}

fn compute(opcode: Opcode, out: ArrayView, inputs: Vec<Operand>) -> Instruction {
    Instruction::Compute { opcode, out, inputs }
}

fn lit(x: i64) -> Operand {
    Operand::Literal(x.to_string())
}

fn finish(bases: Vec<BaseArray>, instrs: Vec<Instruction>) -> Result<Program, String> {
    Program::new(bases, instrs).map_err(|e| format!("generated program is invalid: {}", e))
}

/// t0 = c; t(k) = t(k-1) op c; DEL t(k-1); ... ending with SYNC of the last temporary.
fn chain(spec: &BenchSpec, rng: &mut ChaCha8Rng) -> Result<Program, String> {
    let mut bases: Vec<BaseArray> = Vec::new();
    let mut instrs = Vec::new();
    let ops = [Opcode::Add, Opcode::Mul, Opcode::Sub, Opcode::Max];
    let body = if spec.ops > 1 { spec.ops - 1 } else { spec.ops };
    while instrs.len() < body {
        let k = bases.len();
        if k > 0 && matches!(instrs.last(), Some(Instruction::Compute { .. })) && instrs.len() > 1 {
            instrs.push(Instruction::Del(k - 2));
            continue;
        }
        bases.push(BaseArray::new(format!("t{:05}", k), spec.size, spec.dtype));
        if k == 0 {
            instrs.push(compute(Opcode::Copy, whole(0, &bases), vec![lit(0)]));
        } else {
            let op = *ops.choose(rng).unwrap();
            instrs.push(compute(
                op,
                whole(k, &bases),
                vec![Operand::View(whole(k - 1, &bases)), lit(rng.gen_range(1..10))],
            ));
        }
    }
    if spec.ops > 1 {
        instrs.push(Instruction::Sync(bases.len() - 1));
    }
    finish(bases, instrs)
}

/// Three-point stencil sweeps: T = U[0:n-2] + U[2:n]; U[1:n-1] = U[1:n-1] + T; DEL T.
fn stencil(spec: &BenchSpec) -> Result<Program, String> {
    if spec.size < 3 {
        return Err("stencil needs arrays of at least 3 elements".into());
    }
    let n = spec.size as i64;
    let mut bases = vec![BaseArray::new("u", spec.size, spec.dtype)];
    let mut instrs = vec![compute(Opcode::Copy, whole(0, &bases), vec![lit(1)])];
    let mut step = 0;
    while instrs.len() < spec.ops {
        let t = bases.len();
        bases.push(BaseArray::new(format!("t{:04}", step), spec.size - 2, spec.dtype));
        let body = [
            compute(
                Opcode::Add,
                whole(t, &bases),
                vec![Operand::View(range(0, &bases, 0, n - 2)), Operand::View(range(0, &bases, 2, n))],
            ),
            compute(
                Opcode::Add,
                range(0, &bases, 1, n - 1),
                vec![Operand::View(range(0, &bases, 1, n - 1)), Operand::View(whole(t, &bases))],
            ),
            Instruction::Del(t),
        ];
        for ins in body {
            if instrs.len() < spec.ops {
                instrs.push(ins);
            }
        }
        step += 1;
    }
    instrs.truncate(spec.ops);
    let used: usize = instrs.iter().flat_map(|i| i.bases()).max().map_or(0, |m| m + 1);
    bases.truncate(used.max(1));
    if spec.ops == 0 {
        bases.clear();
    }
    finish(bases, instrs)
}

/// One source read by many independent consumers, whose results are folded into an
/// accumulator and deleted.
fn fan(spec: &BenchSpec) -> Result<Program, String> {
    let mut bases = vec![BaseArray::new("src", spec.size, spec.dtype), BaseArray::new("acc", spec.size, spec.dtype)];
    let mut instrs = vec![
        compute(Opcode::Copy, whole(0, &bases), vec![lit(3)]),
        compute(Opcode::Copy, whole(1, &bases), vec![lit(0)]),
    ];
    let width = ((spec.ops.saturating_sub(3)) / 3).max(1);
    let first = bases.len();
    for k in 0..width {
        bases.push(BaseArray::new(format!("r{:04}", k), spec.size, spec.dtype));
        instrs.push(compute(
            Opcode::Mul,
            whole(first + k, &bases),
            vec![Operand::View(whole(0, &bases)), lit(k as i64 + 1)],
        ));
    }
    for k in 0..width {
        let acc = whole(1, &bases);
        instrs.push(compute(
            Opcode::Add,
            acc.clone(),
            vec![Operand::View(acc), Operand::View(whole(first + k, &bases))],
        ));
        instrs.push(Instruction::Del(first + k));
    }
    while instrs.len() + 1 < spec.ops {
        instrs.push(Instruction::Sync(0));
    }
    instrs.push(Instruction::Sync(1));
    instrs.truncate(spec.ops);
    let used: usize = instrs.iter().flat_map(|i| i.bases()).max().map_or(0, |m| m + 1);
    bases.truncate(used);
    finish(bases, instrs)
}

/// Random element-wise programs over a few arrays of `size` or `size + 1` elements using
/// whole or shifted windows, with occasional DEL and SYNC.
fn random_dag(spec: &BenchSpec, rng: &mut ChaCha8Rng) -> Result<Program, String> {
    if spec.bases == 0 && spec.ops > 0 {
        return Err("random-dag needs at least one base array".into());
    }
    let bases: Vec<BaseArray> = (0..spec.bases)
        .map(|k| {
            BaseArray::new(
                format!("{}", (b'a' + (k % 26) as u8) as char).repeat(k / 26 + 1),
                spec.size + rng.gen_range(0..2),
                spec.dtype,
            )
        })
        .collect();
    let views = |b: usize| -> Vec<ArrayView> {
        let n = bases[b].nelem as i64;
        let mut v = vec![whole(b, &bases)];
        if n > spec.size as i64 {
            v.push(range(b, &bases, 0, n - 1));
            v.push(range(b, &bases, 1, n));
        }
        v
    };
    let mut written = vec![false; bases.len()];
    let mut deleted = vec![false; bases.len()];
    let mut instrs = Vec::new();
    let mut tries = 0;
    while instrs.len() < spec.ops && tries < 50 * spec.ops + 100 {
        tries += 1;
        let live: Vec<usize> = (0..bases.len()).filter(|&b| written[b] && !deleted[b]).collect();
        let r: f64 = rng.gen();
        if r < 0.12 && !live.is_empty() {
            let b = *live.choose(rng).unwrap();
            deleted[b] = true;
            instrs.push(Instruction::Del(b));
            continue;
        }
        if r < 0.18 && !live.is_empty() {
            instrs.push(Instruction::Sync(*live.choose(rng).unwrap()));
            continue;
        }
        let open: Vec<usize> = (0..bases.len()).filter(|&b| !deleted[b]).collect();
        let Some(&ob) = open.choose(rng) else { break };
        let out = views(ob).choose(rng).unwrap().clone();
        let opcode = *[Opcode::Copy, Opcode::Add, Opcode::Mul, Opcode::Max].choose(rng).unwrap();
        let mut inputs = Vec::new();
        for _ in 0..opcode.arity() {
            let cands: Vec<ArrayView> = live
                .iter()
                .flat_map(|&b| views(b))
                .filter(|v| v.shape == out.shape && (*v == out || !crate::ir::views_overlap(v, &out)))
                .collect();
            match cands.choose(rng) {
                Some(v) if rng.gen_bool(0.8) => inputs.push(Operand::View(v.clone())),
                _ => inputs.push(lit(rng.gen_range(0..5))),
            }
        }
        written[ob] = true;
        instrs.push(compute(opcode, out, inputs));
    }
    finish(bases, instrs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_valid_and_seeded() {
        for g in GENERATORS {
            for ops in [0, 1, 2, 5, 12, 40] {
                let spec = BenchSpec { generator: g.into(), ops, seed: 7, ..BenchSpec::default() };
                let a = generate(&spec).unwrap();
                let b = generate(&spec).unwrap();
                assert_eq!(a, b);
                assert!(a.len() <= ops, "{} {}", g, ops);
                if g != "random-dag" {
                    assert_eq!(a.len(), ops, "{} {}", g, ops);
                }
            }
        }
    }

    #[test]
    fn chain_shape() {
        let p = generate(&BenchSpec { generator: "chain".into(), ops: 1000, ..BenchSpec::default() }).unwrap();
        assert_eq!(p.len(), 1000);
        assert!(matches!(p.instructions().last(), Some(Instruction::Sync(_))));
    }

    #[test]
    fn unknown_generator() {
        assert!(generate(&BenchSpec { generator: "nope".into(), ..BenchSpec::default() }).is_err());
    }
}
