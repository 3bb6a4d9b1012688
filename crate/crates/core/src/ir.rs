//! Array bytecode: base arrays, strided views, instructions and their access sets.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DType {
    U8,
    F32,
    F64,
}

impl DType {
    pub fn size(self) -> u64 {
        match self {
            DType::U8 => 1,
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DType::U8 => "u8",
            DType::F32 => "f32",
            DType::F64 => "f64",
        }
    }

    pub fn parse(s: &str) -> Option<DType> {
        match s {
            "u8" => Some(DType::U8),
            "f32" => Some(DType::F32),
            "f64" => Some(DType::F64),
            _ => None,
        }
    }
}

/// A contiguous one-dimensional allocation. `dims` is the row-major shape used to
/// interpret multi-dimensional slices; its product is `nelem`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BaseArray {
    pub name: String,
    pub nelem: u64,
    pub dtype: DType,
    pub dims: Vec<u64>,
}

impl BaseArray {
    pub fn new(name: impl Into<String>, nelem: u64, dtype: DType) -> Self {
        BaseArray { name: name.into(), nelem, dtype, dims: vec![nelem] }
    }

    pub fn with_dims(name: impl Into<String>, dims: Vec<u64>, dtype: DType) -> Self {
        let nelem = dims.iter().product();
        BaseArray { name: name.into(), nelem, dtype, dims }
    }

    /// Element stride of each dimension of `dims`.
    pub fn row_strides(&self) -> Vec<i64> {
        let mut st = vec![1i64; self.dims.len()];
        for d in (0..self.dims.len().saturating_sub(1)).rev() {
            st[d] = st[d + 1] * self.dims[d + 1] as i64;
        }
        st
    }
}

/// One dimension of a slice as written in source: `start:stop:step`, any part optional,
/// or a single index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct SliceSpec {
    pub start: Option<i64>,
    pub stop: Option<i64>,
    pub step: Option<i64>,
    pub index: bool,
}

impl SliceSpec {
    pub fn range(start: i64, stop: i64) -> Self {
        SliceSpec { start: Some(start), stop: Some(stop), step: None, index: false }
    }

    pub fn full() -> Self {
        SliceSpec::default()
    }

    /// Resolves against a dimension of length `n`; returns (start, extent, step).
    fn resolve(&self, n: i64) -> Result<(i64, u64, i64), String> {
        if self.index {
            let mut i = self.start.unwrap_or(0);
            if i < 0 {
                i += n;
            }
            if i < 0 || i >= n {
                return Err(format!("index {} outside 0..{}", self.start.unwrap_or(0), n));
            }
            return Ok((i, 1, 1));
        }
        let step = self.step.unwrap_or(1);
        if step == 0 {
            return Err("slice step cannot be zero".into());
        }
        let wrap = |x: i64| if x < 0 { x + n } else { x };
        let (start, stop, len);
        if step > 0 {
            start = self.start.map(wrap).unwrap_or(0);
            stop = self.stop.map(wrap).unwrap_or(n);
            if start < 0 || start > n || stop < 0 || stop > n {
                return Err(format!("bounds {}:{} outside 0..{}", start, stop, n));
            }
            len = if stop > start { (stop - start + step - 1) / step } else { 0 };
        } else {
            start = self.start.map(wrap).unwrap_or(n - 1);
            stop = self.stop.map(wrap).unwrap_or(-1);
            if start < 0 || start >= n || stop < -1 || stop >= n {
                return Err(format!("bounds {}:{} outside 0..{}", start, stop, n));
            }
            len = if start > stop { (start - stop + (-step) - 1) / (-step) } else { 0 };
        }
        if len == 0 {
            return Err("empty slice".into());
        }
        Ok((start, len as u64, step))
    }
}

/// A strided window onto a base array, in normalized offset/shape/strides form.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ArrayView {
    pub base: usize,
    pub offset: i64,
    pub shape: Vec<u64>,
    pub strides: Vec<i64>,
}

impl ArrayView {
    pub fn whole(base: usize, b: &BaseArray) -> ArrayView {
        ArrayView { base, offset: 0, shape: b.dims.clone(), strides: b.row_strides() }
    }

    /// Builds a view from per-dimension slices; extent-1 dimensions get the base's row
    /// stride so equal element sets compare equal.
    pub fn slice(base: usize, b: &BaseArray, specs: &[SliceSpec]) -> Result<ArrayView, String> {
        if specs.len() != b.dims.len() {
            return Err(format!("`{}` has {} dimension(s), slice has {}", b.name, b.dims.len(), specs.len()));
        }
        let rs = b.row_strides();
        let mut offset = 0;
        let mut shape = Vec::with_capacity(specs.len());
        let mut strides = Vec::with_capacity(specs.len());
        for (d, spec) in specs.iter().enumerate() {
            let (start, ext, step) = spec.resolve(b.dims[d] as i64)?;
            offset += start * rs[d];
            shape.push(ext);
            strides.push(if ext == 1 { rs[d] } else { step * rs[d] });
        }
        Ok(ArrayView { base, offset, shape, strides })
    }

    pub fn len(&self) -> u64 {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn min_max(&self) -> (i64, i64) {
        let mut lo = self.offset;
        let mut hi = self.offset;
        for (&e, &s) in self.shape.iter().zip(&self.strides) {
            let span = (e as i64 - 1) * s;
            if span < 0 {
                lo += span;
            } else {
                hi += span;
            }
        }
        (lo, hi)
    }

    /// Every addressed element index, in row-major iteration order.
    pub fn addresses(&self) -> impl Iterator<Item = i64> + '_ {
        let total = self.len();
        let mut idx = vec![0u64; self.shape.len()];
        let mut addr = self.offset;
        let mut n = 0u64;
        std::iter::from_fn(move || {
            if n == total {
                return None;
            }
            let out = addr;
            n += 1;
            for d in (0..idx.len()).rev() {
                idx[d] += 1;
                addr += self.strides[d];
                if idx[d] < self.shape[d] {
                    break;
                }
                addr -= self.strides[d] * self.shape[d] as i64;
                idx[d] = 0;
            }
            Some(out)
        })
    }

    /// Positive strides, no unit extents, sorted by stride, contiguous dims merged.
    fn collapsed(&self) -> (i64, Vec<(u64, i64)>) {
        let mut off = self.offset;
        let mut dims: Vec<(u64, i64)> = Vec::new();
        for (&e, &s) in self.shape.iter().zip(&self.strides) {
            if e == 1 {
                continue;
            }
            if s < 0 {
                off += (e as i64 - 1) * s;
                dims.push((e, -s));
            } else {
                dims.push((e, s));
            }
        }
        dims.sort_by_key(|&(e, s)| (s, e));
        let mut merged: Vec<(u64, i64)> = Vec::new();
        for (e, s) in dims {
            match merged.last_mut() {
                Some(last) if last.0 as i64 * last.1 == s => last.0 *= e,
                _ => merged.push((e, s)),
            }
        }
        (off, merged)
    }
}

fn ext_gcd(a: i128, b: i128) -> (i128, i128, i128) {
    if b == 0 {
        (a, 1, 0)
    } else {
        let (g, x, y) = ext_gcd(b, a % b);
        (g, y, x - (a / b) * y)
    }
}

/// True iff the two arithmetic progressions share an element.
fn progressions_meet(a0: i64, sa: i64, na: u64, b0: i64, sb: i64, nb: u64) -> bool {
    let (a0, sa, b0, sb) = (a0 as i128, sa.max(1) as i128, b0 as i128, sb.max(1) as i128);
    let lo = a0.max(b0);
    let hi = (a0 + (na as i128 - 1) * sa).min(b0 + (nb as i128 - 1) * sb);
    if lo > hi {
        return false;
    }
    let (g, p, _) = ext_gcd(sa, sb);
    if (b0 - a0) % g != 0 {
        return false;
    }
    let m = sb / g;
    let k = ((b0 - a0) / g * p).rem_euclid(m);
    let x = a0 + sa * k;
    let l = sa * m;
    let first = x + (lo - x).div_euclid(l) * l;
    let first = if first < lo { first + l } else { first };
    first <= hi
}

pub fn views_overlap(a: &ArrayView, b: &ArrayView) -> bool {
    if a.base != b.base {
        return false;
    }
    let (alo, ahi) = a.min_max();
    let (blo, bhi) = b.min_max();
    if ahi < blo || bhi < alo {
        return false;
    }
    let (ao, ad) = a.collapsed();
    let (bo, bd) = b.collapsed();
    if ad.len() <= 1 && bd.len() <= 1 {
        let (na, sa) = ad.first().copied().unwrap_or((1, 1));
        let (nb, sb) = bd.first().copied().unwrap_or((1, 1));
        return progressions_meet(ao, sa, na, bo, sb, nb);
    }
    // Exact enumeration: hash the smaller view, stream the larger one.
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let set: HashSet<i64> = small.addresses().collect();
    large.addresses().any(|x| set.contains(&x))
}

pub fn views_identical(a: &ArrayView, b: &ArrayView) -> bool {
    a == b
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Opcode {
    Copy,
    Add,
    Mul,
    Max,
    Min,
    Sub,
    Div,
    Del,
    Sync,
}

impl Opcode {
    pub fn name(self) -> &'static str {
        match self {
            Opcode::Copy => "COPY",
            Opcode::Add => "ADD",
            Opcode::Mul => "MUL",
            Opcode::Max => "MAX",
            Opcode::Min => "MIN",
            Opcode::Sub => "SUB",
            Opcode::Div => "DIV",
            Opcode::Del => "DEL",
            Opcode::Sync => "SYNC",
        }
    }

    pub fn parse(s: &str) -> Option<Opcode> {
        Some(match s {
            "COPY" => Opcode::Copy,
            "ADD" => Opcode::Add,
            "MUL" => Opcode::Mul,
            "MAX" => Opcode::Max,
            "MIN" => Opcode::Min,
            "SUB" => Opcode::Sub,
            "DIV" => Opcode::Div,
            "DEL" => Opcode::Del,
            "SYNC" => Opcode::Sync,
            _ => return None,
        })
    }

    /// Number of inputs of an element-wise opcode.
    pub fn arity(self) -> usize {
        match self {
            Opcode::Copy => 1,
            Opcode::Del | Opcode::Sync => 0,
            _ => 2,
        }
    }

    pub fn is_elementwise(self) -> bool {
        !matches!(self, Opcode::Del | Opcode::Sync)
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Operand {
    View(ArrayView),
    /// Scalar literal, kept as written.
    Literal(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Instruction {
    Compute { opcode: Opcode, out: ArrayView, inputs: Vec<Operand> },
    Del(usize),
    Sync(usize),
}

impl Instruction {
    pub fn opcode(&self) -> Opcode {
        match self {
            Instruction::Compute { opcode, .. } => *opcode,
            Instruction::Del(_) => Opcode::Del,
            Instruction::Sync(_) => Opcode::Sync,
        }
    }

    pub fn output(&self) -> Option<&ArrayView> {
        match self {
            Instruction::Compute { out, .. } => Some(out),
            _ => None,
        }
    }

    pub fn input_views(&self) -> impl Iterator<Item = &ArrayView> {
        let inputs: &[Operand] = match self {
            Instruction::Compute { inputs, .. } => inputs,
            _ => &[],
        };
        inputs.iter().filter_map(|o| match o {
            Operand::View(v) => Some(v),
            Operand::Literal(_) => None,
        })
    }

    /// Base named by DEL/SYNC.
    pub fn control_base(&self) -> Option<usize> {
        match self {
            Instruction::Del(b) | Instruction::Sync(b) => Some(*b),
            Instruction::Compute { .. } => None,
        }
    }

    /// Every base the instruction mentions, including DEL/SYNC targets.
    pub fn bases(&self) -> BTreeSet<usize> {
        let mut s: BTreeSet<usize> = self.input_views().map(|v| v.base).collect();
        s.extend(self.output().map(|v| v.base));
        s.extend(self.control_base());
        s
    }
}

/// in/out/new/del of one instruction or block. `reads` and `writes` hold distinct views.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AccessSets {
    pub reads: BTreeSet<ArrayView>,
    pub writes: BTreeSet<ArrayView>,
    pub news: BTreeSet<usize>,
    pub dels: BTreeSet<usize>,
}

/// Access sets of a block plus its external accesses, kept as separate read and write parts.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BlockAccess {
    pub sets: AccessSets,
    pub ext_reads: BTreeSet<ArrayView>,
    pub ext_writes: BTreeSet<ArrayView>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IrError {
    #[error("line {line}, column {column}: {msg}")]
    Syntax { line: usize, column: usize, msg: String },
    #[error("line {line}: undeclared base `{name}`")]
    UndeclaredBase { line: usize, name: String },
    #[error("line {line}: `{name}` declared twice")]
    DuplicateBase { line: usize, name: String },
    #[error("line {line}: view of `{name}` out of bounds: {detail}")]
    OutOfBounds { line: usize, name: String, detail: String },
    #[error("line {line}: `{name}` read before its first write")]
    ReadBeforeWrite { line: usize, name: String },
    #[error("line {line}: `{name}` used after DEL")]
    UseAfterDel { line: usize, name: String },
    #[error("line {line}: `{name}` deleted twice")]
    DuplicateDel { line: usize, name: String },
    #[error("line {line}: {opcode} expects {expected} input(s), got {got}")]
    Arity { line: usize, opcode: Opcode, expected: usize, got: usize },
    #[error("line {line}: operand shapes differ ({detail})")]
    ShapeMismatch { line: usize, detail: String },
    #[error("line {line}: input `{name}` overlaps the output without being identical to it")]
    NotDataParallel { line: usize, name: String },
}

/// A validated program. Immutable after construction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Program {
    bases: Vec<BaseArray>,
    instructions: Vec<Instruction>,
    access: Vec<AccessSets>,
}

impl Program {
    /// Validates and builds; errors report 1-based instruction numbers as lines.
    pub fn new(bases: Vec<BaseArray>, instructions: Vec<Instruction>) -> Result<Program, IrError> {
        let lines: Vec<usize> = (1..=instructions.len()).collect();
        Program::with_lines(bases, instructions, &lines)
    }

    pub(crate) fn with_lines(
        bases: Vec<BaseArray>,
        instructions: Vec<Instruction>,
        lines: &[usize],
    ) -> Result<Program, IrError> {
        validate(&bases, &instructions, lines)?;
        let access = compute_access(&instructions);
        Ok(Program { bases, instructions, access })
    }

    pub fn bases(&self) -> &[BaseArray] {
        &self.bases
    }

    pub fn base(&self, id: usize) -> &BaseArray {
        &self.bases[id]
    }

    pub fn base_id(&self, name: &str) -> Option<usize> {
        self.bases.iter().position(|b| b.name == name)
    }

    pub fn instructions(&self) -> &[Instruction] {
        &self.instructions
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    pub fn access(&self, i: usize) -> &AccessSets {
        &self.access[i]
    }

    pub fn view_bytes(&self, v: &ArrayView) -> u64 {
        v.len() * self.bases[v.base].dtype.size()
    }

    /// Bases that some instruction creates.
    pub fn used_bases(&self) -> BTreeSet<usize> {
        self.access.iter().flat_map(|a| a.news.iter().copied()).collect()
    }

    /// All distinct views accessed anywhere.
    pub fn distinct_views(&self) -> BTreeSet<&ArrayView> {
        self.access.iter().flat_map(|a| a.reads.iter().chain(a.writes.iter())).collect()
    }

    pub fn view_text(&self, v: &ArrayView) -> String {
        format_view(&self.bases[v.base], v)
    }

    pub fn instruction_text(&self, i: usize) -> String {
        format_instruction(&self.bases, &self.instructions[i])
    }
}

fn validate(bases: &[BaseArray], instrs: &[Instruction], lines: &[usize]) -> Result<(), IrError> {
    let mut written = vec![false; bases.len()];
    let mut deleted = vec![false; bases.len()];
    for (k, ins) in instrs.iter().enumerate() {
        let line = lines[k];
        for b in ins.bases() {
            if b >= bases.len() {
                return Err(IrError::UndeclaredBase { line, name: format!("#{}", b) });
            }
        }
        let name = |b: usize| bases[b].name.clone();
        match ins {
            Instruction::Compute { opcode, out, inputs } => {
                if !opcode.is_elementwise() || inputs.len() != opcode.arity() {
                    return Err(IrError::Arity { line, opcode: *opcode, expected: opcode.arity(), got: inputs.len() });
                }
                for v in std::iter::once(out).chain(ins.input_views()) {
                    check_bounds(&bases[v.base], v).map_err(|detail| IrError::OutOfBounds {
                        line,
                        name: name(v.base),
                        detail,
                    })?;
                    if deleted[v.base] {
                        return Err(IrError::UseAfterDel { line, name: name(v.base) });
                    }
                }
                for v in ins.input_views() {
                    if !written[v.base] {
                        return Err(IrError::ReadBeforeWrite { line, name: name(v.base) });
                    }
                    if v.shape != out.shape {
                        return Err(IrError::ShapeMismatch {
                            line,
                            detail: format!("{:?} vs {:?}", out.shape, v.shape),
                        });
                    }
                    if v != out && views_overlap(v, out) {
                        return Err(IrError::NotDataParallel { line, name: name(v.base) });
                    }
                }
                written[out.base] = true;
            }
            Instruction::Del(b) | Instruction::Sync(b) => {
                let b = *b;
                if deleted[b] {
                    return Err(if matches!(ins, Instruction::Del(_)) {
                        IrError::DuplicateDel { line, name: name(b) }
                    } else {
                        IrError::UseAfterDel { line, name: name(b) }
                    });
                }
                if !written[b] {
                    return Err(IrError::ReadBeforeWrite { line, name: name(b) });
                }
                if matches!(ins, Instruction::Del(_)) {
                    deleted[b] = true;
                }
            }
        }
    }
    Ok(())
}

fn check_bounds(b: &BaseArray, v: &ArrayView) -> Result<(), String> {
    if v.shape.is_empty() || v.shape.len() != v.strides.len() || v.shape.contains(&0) {
        return Err("empty or malformed shape".into());
    }
    let (lo, hi) = v.min_max();
    if lo < 0 || hi >= b.nelem as i64 {
        return Err(format!("addresses {}..={} outside 0..{}", lo, hi, b.nelem));
    }
    Ok(())
}

fn compute_access(instrs: &[Instruction]) -> Vec<AccessSets> {
    let mut seen = BTreeSet::new();
    instrs
        .iter()
        .map(|ins| {
            let mut a = AccessSets::default();
            a.reads.extend(ins.input_views().cloned());
            a.writes.extend(ins.output().cloned());
            for b in ins.bases() {
                if seen.insert(b) {
                    a.news.insert(b);
                }
            }
            if let Instruction::Del(b) = ins {
                a.dels.insert(*b);
            }
            a
        })
        .collect()
}

pub fn instruction_access(p: &Program, index: usize) -> AccessSets {
    p.access(index).clone()
}

pub fn block_access(p: &Program, block: &[usize]) -> BlockAccess {
    let mut sets = AccessSets::default();
    for &f in block {
        let a = p.access(f);
        sets.reads.extend(a.reads.iter().cloned());
        sets.writes.extend(a.writes.iter().cloned());
        sets.news.extend(a.news.iter().copied());
        sets.dels.extend(a.dels.iter().copied());
    }
    let ext_reads = sets.reads.iter().filter(|v| !sets.news.contains(&v.base)).cloned().collect();
    let ext_writes = sets.writes.iter().filter(|v| !sets.dels.contains(&v.base)).cloned().collect();
    BlockAccess { sets, ext_reads, ext_writes }
}

/// Σ over distinct views of element count × dtype size.
pub fn byte_count<'a>(p: &Program, views: impl IntoIterator<Item = &'a ArrayView>) -> u64 {
    views.into_iter().map(|v| p.view_bytes(v)).sum()
}

impl BlockAccess {
    pub fn ext_bytes(&self, p: &Program) -> u64 {
        byte_count(p, &self.ext_reads) + byte_count(p, &self.ext_writes)
    }
}

// ---- text format ----

/// Per-dimension (start, extent, step) of a view relative to its base's dims.
fn decompose(b: &BaseArray, v: &ArrayView) -> Vec<(i64, u64, i64)> {
    let rs = b.row_strides();
    let mut rem = v.offset;
    let mut out = Vec::with_capacity(rs.len());
    for (d, &r) in rs.iter().enumerate() {
        let start = rem / r;
        rem %= r;
        out.push((start, v.shape[d], v.strides[d] / r));
    }
    out
}

pub fn format_view(b: &BaseArray, v: &ArrayView) -> String {
    if *v == ArrayView::whole(v.base, b) {
        return b.name.clone();
    }
    let parts: Vec<String> = decompose(b, v)
        .into_iter()
        .map(|(start, ext, step)| {
            let last = start + (ext as i64 - 1) * step;
            if step > 0 {
                let stop = last + 1;
                if step == 1 {
                    format!("{}:{}", start, stop)
                } else {
                    format!("{}:{}:{}", start, stop, step)
                }
            } else if last - 1 < 0 {
                format!("{}::{}", start, step)
            } else {
                format!("{}:{}:{}", start, last - 1, step)
            }
        })
        .collect();
    format!("{}[{}]", b.name, parts.join(","))
}

pub fn format_instruction(bases: &[BaseArray], ins: &Instruction) -> String {
    match ins {
        Instruction::Compute { opcode, out, inputs } => {
            let mut s = format!("{} {}", opcode, format_view(&bases[out.base], out));
            for o in inputs {
                s.push_str(", ");
                match o {
                    Operand::View(v) => s.push_str(&format_view(&bases[v.base], v)),
                    Operand::Literal(l) => s.push_str(l),
                }
            }
            s
        }
        Instruction::Del(b) => format!("DEL {}", bases[*b].name),
        Instruction::Sync(b) => format!("SYNC {}", bases[*b].name),
    }
}

fn format_decl(b: &BaseArray) -> String {
    let mut s = format!("array {} {} {}", b.name, b.nelem, b.dtype.name());
    if b.dims.len() > 1 {
        let dims: Vec<String> = b.dims.iter().map(|d| d.to_string()).collect();
        s.push(' ');
        s.push_str(&dims.join("x"));
    }
    s
}

/// Canonical text: declarations sorted by name, then instructions in order.
pub fn serialize(p: &Program) -> String {
    let mut order: Vec<&BaseArray> = p.bases.iter().collect();
    order.sort_by(|a, b| a.name.cmp(&b.name));
    let mut out = String::new();
    for b in order {
        out.push_str(&format_decl(b));
        out.push('\n');
    }
    for i in 0..p.len() {
        out.push_str(&p.instruction_text(i));
        out.push('\n');
    }
    out
}

/// Canonical text with bases renamed `b0, b1, ...` by first use; unused declarations follow,
/// ordered by size and dtype. Names and declaration order do not affect the result.
pub fn serialize_positional(p: &Program) -> String {
    let mut order: Vec<usize> = Vec::new();
    for ins in &p.instructions {
        let mut mentioned: Vec<usize> = Vec::new();
        if let Some(o) = ins.output() {
            mentioned.push(o.base);
        }
        mentioned.extend(ins.input_views().map(|v| v.base));
        mentioned.extend(ins.control_base());
        for b in mentioned {
            if !order.contains(&b) {
                order.push(b);
            }
        }
    }
    let mut unused: Vec<usize> = (0..p.bases.len()).filter(|b| !order.contains(b)).collect();
    unused.sort_by_key(|&b| (p.bases[b].dims.clone(), p.bases[b].dtype));
    order.extend(unused);
    let mut renamed = p.bases.clone();
    for (k, &b) in order.iter().enumerate() {
        renamed[b].name = format!("b{}", k);
    }
    let mut out = String::new();
    for &b in &order {
        out.push_str(&format_decl(&renamed[b]));
        out.push('\n');
    }
    for ins in &p.instructions {
        out.push_str(&format_instruction(&renamed, ins));
        out.push('\n');
    }
    out
}

// ---- parser ----

struct Stmt<'a> {
    line: usize,
    column: usize,
    text: &'a str,
}

fn statements(src: &str) -> Vec<Stmt<'_>> {
    let mut out = Vec::new();
    for (ln, raw) in src.lines().enumerate() {
        let code = raw.split('#').next().unwrap_or("");
        let mut col = 0;
        for piece in code.split(';') {
            let lead = piece.len() - piece.trim_start().len();
            let t = piece.trim();
            if !t.is_empty() {
                out.push(Stmt { line: ln + 1, column: col + lead + 1, text: t });
            }
            col += piece.len() + 1;
        }
    }
    out
}

fn is_name(s: &str) -> bool {
    let mut c = s.chars();
    matches!(c.next(), Some(ch) if ch.is_ascii_alphabetic() || ch == '_')
        && c.all(|ch| ch.is_ascii_alphanumeric() || ch == '_')
}

/// Splits on top-level commas; yields (byte offset, trimmed piece).
fn split_operands(s: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, ch) in s.char_indices() {
        match ch {
            '[' => depth += 1,
            ']' => depth -= 1,
            ',' if depth == 0 => {
                out.push((start, &s[start..i]));
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push((start, &s[start..]));
    out.into_iter().map(|(o, p)| (o + p.len() - p.trim_start().len(), p.trim())).collect()
}

pub fn parse_program(src: &str) -> Result<Program, IrError> {
    let stmts = statements(src);
    let syntax = |st: &Stmt, off: usize, msg: String| IrError::Syntax { line: st.line, column: st.column + off, msg };

    let mut decls: Vec<(BaseArray, usize)> = Vec::new();
    let mut body: Vec<&Stmt> = Vec::new();
    for st in &stmts {
        let word = st.text.split_whitespace().next().unwrap_or("");
        if word != "array" {
            body.push(st);
            continue;
        }
        let toks: Vec<&str> = st.text.split_whitespace().collect();
        if toks.len() < 4 || toks.len() > 5 {
            return Err(syntax(st, 0, "expected `array NAME NELEM DTYPE [DIMS]`".into()));
        }
        if !is_name(toks[1]) {
            return Err(syntax(st, 6, format!("invalid array name `{}`", toks[1])));
        }
        let nelem: u64 = toks[2]
            .parse()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| syntax(st, 0, format!("invalid element count `{}`", toks[2])))?;
        let dtype = DType::parse(toks[3]).ok_or_else(|| syntax(st, 0, format!("unknown dtype `{}`", toks[3])))?;
        let dims = match toks.get(4) {
            None => vec![nelem],
            Some(d) => {
                let dims: Option<Vec<u64>> = d.split('x').map(|x| x.parse().ok().filter(|&v: &u64| v >= 1)).collect();
                match dims {
                    Some(dims) if dims.iter().product::<u64>() == nelem => dims,
                    _ => return Err(syntax(st, 0, format!("dims `{}` do not multiply to {}", d, nelem))),
                }
            }
        };
        if decls.iter().any(|(b, _)| b.name == toks[1]) {
            return Err(IrError::DuplicateBase { line: st.line, name: toks[1].into() });
        }
        decls.push((BaseArray { name: toks[1].into(), nelem, dtype, dims }, st.line));
    }
    decls.sort_by(|a, b| a.0.name.cmp(&b.0.name));
    let bases: Vec<BaseArray> = decls.iter().map(|(b, _)| b.clone()).collect();
    let lookup = |st: &Stmt, name: &str| -> Result<usize, IrError> {
        let id = bases
            .iter()
            .position(|b| b.name == name)
            .ok_or_else(|| IrError::UndeclaredBase { line: st.line, name: name.into() })?;
        if decls[id].1 > st.line {
            return Err(IrError::UndeclaredBase { line: st.line, name: name.into() });
        }
        Ok(id)
    };

    let mut instrs = Vec::new();
    let mut lines = Vec::new();
    for st in body {
        let (head, rest) = match st.text.find(char::is_whitespace) {
            Some(i) => (&st.text[..i], &st.text[i..]),
            None => (st.text, ""),
        };
        let opcode = Opcode::parse(head).ok_or_else(|| syntax(st, 0, format!("unknown opcode `{}`", head)))?;
        let rest_off = head.len() + (rest.len() - rest.trim_start().len());
        let rest = rest.trim();
        if !opcode.is_elementwise() {
            if !is_name(rest) {
                return Err(syntax(st, rest_off, format!("{} takes one base name", opcode)));
            }
            let b = lookup(st, rest)?;
            instrs.push(if opcode == Opcode::Del { Instruction::Del(b) } else { Instruction::Sync(b) });
            lines.push(st.line);
            continue;
        }
        if rest.is_empty() {
            return Err(syntax(st, rest_off, format!("{} needs an output operand", opcode)));
        }
        let mut operands = Vec::new();
        for (off, text) in split_operands(rest) {
            let col = rest_off + off;
            if text.is_empty() {
                return Err(syntax(st, col, "empty operand".into()));
            }
            operands.push(parse_operand(st, col, text, &bases, &lookup)?);
        }
        let mut it = operands.into_iter();
        let out = match it.next() {
            Some(Operand::View(v)) => v,
            _ => return Err(syntax(st, rest_off, "output must be an array view".into())),
        };
        instrs.push(Instruction::Compute { opcode, out, inputs: it.collect() });
        lines.push(st.line);
    }
    Program::with_lines(bases, instrs, &lines)
}

fn parse_operand(
    st: &Stmt,
    col: usize,
    text: &str,
    bases: &[BaseArray],
    lookup: &dyn Fn(&Stmt, &str) -> Result<usize, IrError>,
) -> Result<Operand, IrError> {
    let syntax = |off: usize, msg: String| IrError::Syntax { line: st.line, column: st.column + col + off, msg };
    let first = text.chars().next().unwrap_or(' ');
    if first.is_ascii_digit() || first == '-' || first == '+' || first == '.' {
        return match text.parse::<f64>() {
            Ok(_) => Ok(Operand::Literal(text.to_string())),
            Err(_) => Err(syntax(0, format!("invalid literal `{}`", text))),
        };
    }
    let (name, slice) = match text.find('[') {
        Some(i) => {
            if !text.ends_with(']') {
                return Err(syntax(text.len(), "missing `]`".into()));
            }
            (text[..i].trim_end(), Some((i + 1, &text[i + 1..text.len() - 1])))
        }
        None => (text, None),
    };
    if !is_name(name) {
        return Err(syntax(0, format!("invalid operand `{}`", text)));
    }
    let id = lookup(st, name)?;
    let b = &bases[id];
    let Some((soff, inner)) = slice else {
        return Ok(Operand::View(ArrayView::whole(id, b)));
    };
    let mut specs = Vec::new();
    let mut pos = soff;
    for comp in inner.split(',') {
        specs.push(parse_slice(comp).map_err(|m| syntax(pos, m))?);
        pos += comp.len() + 1;
    }
    ArrayView::slice(id, b, &specs).map(Operand::View).map_err(|detail| IrError::OutOfBounds {
        line: st.line,
        name: name.into(),
        detail,
    })
}

fn parse_slice(comp: &str) -> Result<SliceSpec, String> {
    let comp = comp.trim();
    let num = |s: &str| -> Result<Option<i64>, String> {
        let s = s.trim();
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| format!("invalid slice bound `{}`", s))
        }
    };
    let parts: Vec<&str> = comp.split(':').collect();
    match parts.len() {
        1 => {
            let i = num(parts[0])?.ok_or("empty index")?;
            Ok(SliceSpec { start: Some(i), stop: None, step: None, index: true })
        }
        2 | 3 => Ok(SliceSpec {
            start: num(parts[0])?,
            stop: num(parts[1])?,
            step: if parts.len() == 3 { num(parts[2])? } else { None },
            index: false,
        }),
        _ => Err(format!("malformed slice `{}`", comp)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d_base() -> BaseArray {
        BaseArray::new("D", 5, DType::U8)
    }

    fn view(spec: &str) -> ArrayView {
        let p = parse_program(&format!("array D 5 u8\narray E 5 u8\nCOPY D, 0\nCOPY E, 0\nCOPY {}, 1", spec)).unwrap();
        p.instructions()[2].output().unwrap().clone()
    }

    #[test]
    fn minimal_program() {
        let p = parse_program("array D 5 u8 ; COPY D, 0").unwrap();
        assert_eq!(p.bases().len(), 1);
        assert_eq!(p.base(0).nelem, 5);
        assert_eq!(p.base(0).dtype.size(), 1);
        assert_eq!(p.len(), 1);
    }

    #[test]
    fn undeclared_base() {
        let e = parse_program("array D 5 u8 ; ADD X, D, D").unwrap_err();
        assert!(matches!(e, IrError::UndeclaredBase { ref name, .. } if name == "X"), "{e}");
    }

    #[test]
    fn distinct_diagnostics() {
        let cases = [
            ("array D 5 u8\nCOPY D[0:9], 0", "OutOfBounds"),
            ("array D 5 u8\narray E 5 u8\nCOPY D, E", "ReadBeforeWrite"),
            ("array D 5 u8\nCOPY D, 0\nDEL D\nCOPY D, 1", "UseAfterDel"),
            ("array D 5 u8\nCOPY D, 0\nDEL D\nDEL D", "DuplicateDel"),
            ("array D 5 u8\nCOPY D, 0\nCOPY D[0:4], D", "ShapeMismatch"),
            ("array D 5 u8\nCOPY D, 0\nCOPY D[0:4], D[1:5]", "NotDataParallel"),
            ("array D 5 u8\nCOPY D, 0, 1", "Arity"),
            ("array D 5 u8\nFROB D, 0", "Syntax"),
            ("array D 5 u8\narray D 4 u8", "DuplicateBase"),
        ];
        for (src, want) in cases {
            let e = parse_program(src).unwrap_err();
            assert!(format!("{e:?}").starts_with(want), "{src}: {e:?}");
        }
    }

    #[test]
    fn syntax_error_has_column() {
        let e = parse_program("array D 5 u8\nCOPY D, 0\nADD D, D, D[1:x]").unwrap_err();
        assert_eq!(e, IrError::Syntax { line: 3, column: 13, msg: "invalid slice bound `x`".into() });
    }

    #[test]
    fn slice_normalization() {
        assert_eq!(view("D"), view("D[0:5:1]"));
        assert_eq!(view("D[:-1]"), view("D[0:4]"));
        assert_eq!(view("D[1:]"), view("D[1:5:1]"));
        let r = view("D[::-1]");
        assert_eq!((r.offset, r.shape.clone(), r.strides.clone()), (4, vec![5], vec![-1]));
        assert_eq!(view("D[2]"), view("D[2:3]"));
    }

    #[test]
    fn overlap_examples() {
        assert!(views_overlap(&view("D[0:4:1]"), &view("D[1:5:1]")));
        assert!(!views_overlap(&view("D[0:4:1]"), &view("E[0:4:1]")));
        assert!(!views_overlap(&view("D[0:4:2]"), &view("D[1:5:2]")));
        assert!(views_overlap(&view("D[::-2]"), &view("D[0:1]")));
    }

    #[test]
    fn identity_examples() {
        assert!(views_identical(&view("D[1:5:1]"), &view("D[1:5:1]")));
        assert!(!views_identical(&view("D[0:4:1]"), &view("D[1:5:1]")));
        assert!(views_identical(&ArrayView::whole(0, &d_base()), &view("D[0:5:1]")));
    }

    #[test]
    fn multi_dim_views() {
        let src = "array M 20 f64 4x5\nCOPY M, 0\nCOPY M[1:3,0:5:2], M[0:2,1:3]";
        let e = parse_program(src).unwrap_err();
        assert!(matches!(e, IrError::ShapeMismatch { .. }));
        let p = parse_program("array M 20 f64 4x5\nCOPY M, 0\nADD M[1:3,0:5:2], M[1:3,0:5:2], 2").unwrap();
        let v = p.instructions()[1].output().unwrap();
        assert_eq!((v.offset, v.shape.clone(), v.strides.clone()), (5, vec![2, 3], vec![5, 2]));
        assert_eq!(p.view_bytes(v), 48);
        let col = parse_program("array M 20 u8 4x5\nCOPY M, 0\nCOPY M[0:4,1], 1").unwrap();
        let c = col.instructions()[1].output().unwrap().clone();
        let row = parse_program("array M 20 u8 4x5\nCOPY M, 0\nCOPY M[2,0:5], 1").unwrap();
        let r = row.instructions()[1].output().unwrap().clone();
        assert!(views_overlap(&c, &r));
        let r3 = parse_program("array M 20 u8 4x5\nCOPY M, 0\nCOPY M[1:4:2,0:5:2], 1").unwrap();
        let v3 = r3.instructions()[1].output().unwrap().clone();
        assert!(!views_overlap(&c, &v3));
        assert_eq!(v3.addresses().collect::<Vec<_>>(), vec![5, 7, 9, 15, 17, 19]);
    }

    #[test]
    fn access_sets() {
        let p = parse_program("array A 4 u8\narray B 4 u8\narray T 4 u8\nCOPY A, 0\nCOPY B, 0\nMUL T, A, B\nDEL A")
            .unwrap();
        let mul = instruction_access(&p, 2);
        assert_eq!(mul.reads.len(), 2);
        assert_eq!(mul.writes.len(), 1);
        assert_eq!(mul.news, BTreeSet::from([2]));
        let del = instruction_access(&p, 3);
        assert!(del.reads.is_empty() && del.writes.is_empty() && del.news.is_empty());
        assert_eq!(del.dels, BTreeSet::from([0]));
        let copy = instruction_access(&p, 0);
        assert!(copy.reads.is_empty());
        assert_eq!(copy.news, BTreeSet::from([0]));
    }

    #[test]
    fn block_ext() {
        let p = parse_program("array A 4 u8\narray T 4 u8\nCOPY T, 1\nADD A, T, T").unwrap();
        let b = block_access(&p, &[0, 1]);
        assert!(b.ext_reads.is_empty());
        assert_eq!(b.ext_writes.len(), 2);
        let q = parse_program("array A 4 u8\narray D 5 u8\nCOPY A, 0\nCOPY D, 0\nADD A, A, D[:-1]\nSYNC D").unwrap();
        let s = block_access(&q, &[2]);
        assert_eq!(s.ext_reads.len(), 2);
        assert_eq!(s.ext_writes.len(), 1);
        assert_eq!(s.ext_bytes(&q), 12);
        assert_eq!(block_access(&q, &[3]).ext_bytes(&q), 0);
    }

    #[test]
    fn byte_counts() {
        let q = parse_program("array A 4 u8\narray D 5 u8\nCOPY A, 0\nCOPY D, 0\nCOPY A, D[1:5]").unwrap();
        let d = q.instructions()[2].input_views().next().unwrap().clone();
        assert_eq!(byte_count(&q, [&d]), 4);
        let a = ArrayView::whole(0, q.base(0));
        assert_eq!(byte_count(&q, [&a, &d]), 8);
    }

    #[test]
    fn roundtrip_and_positional() {
        let src = "array Z 6 f32\narray Y 6 f32\nCOPY Z[::2], 0\nADD Y[0:3], Z[0:6:2], Z[4::-2]\nDEL Z\n";
        let p = parse_program(src).unwrap();
        let text = serialize(&p);
        assert_eq!(parse_program(&text).unwrap(), p);
        let renamed =
            parse_program("array A 6 f32\narray Q 6 f32\nCOPY Q[::2], 0\nADD A[0:3], Q[0:6:2], Q[4::-2]\nDEL Q\n")
                .unwrap();
        assert_eq!(serialize_positional(&p), serialize_positional(&renamed));
        assert_ne!(serialize(&p), serialize(&renamed));
    }
}
