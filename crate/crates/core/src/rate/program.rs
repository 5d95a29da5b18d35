use crate::error::EvalError;
use crate::rate::RateExpr;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Instr {
    PushConst(f64),
    PushSpecies(usize),
    PushParam(usize),
    Add,
    Sub,
    Mul,
    Div,
    PowInt(i32),
}

const INLINE_STACK: usize = 32;

/// Flat post-order program over a value stack.
#[derive(Debug, Clone, PartialEq)]
pub struct StackProgram {
    code: Vec<Instr>,
    max_depth: usize,
}

impl StackProgram {
    /// Lowers an expression tree in post order. References are checked
    /// against the given species/parameter counts.
    pub fn compile(expr: &RateExpr, n_species: usize, n_params: usize) -> Result<Self, EvalError> {
        expr.check_references(n_species, n_params)?;
        let mut code = Vec::new();
        lower(expr, &mut code);
        Self::from_instructions(code)
    }

    /// Wraps a hand-written instruction list after verifying stack balance.
    pub fn from_instructions(code: Vec<Instr>) -> Result<Self, EvalError> {
        let mut depth = 0usize;
        let mut max_depth = 0usize;
        for instr in &code {
            match instr {
                Instr::PushConst(_) | Instr::PushSpecies(_) | Instr::PushParam(_) => depth += 1,
                Instr::Add | Instr::Sub | Instr::Mul | Instr::Div => {
                    if depth < 2 {
                        return Err(EvalError::StackImbalance);
                    }
                    depth -= 1;
                }
                Instr::PowInt(_) => {
                    if depth < 1 {
                        return Err(EvalError::StackImbalance);
                    }
                }
            }
            max_depth = max_depth.max(depth);
        }
        if depth != 1 {
            return Err(EvalError::StackImbalance);
        }
        Ok(StackProgram { code, max_depth })
    }

    pub fn instructions(&self) -> &[Instr] {
        &self.code
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn evaluate(&self, state: &[i64], params: &[f64]) -> Result<f64, EvalError> {
        if self.max_depth <= INLINE_STACK {
            let mut stack = [0.0f64; INLINE_STACK];
            run(&self.code, &mut stack, state, params)
        } else {
            let mut stack = vec![0.0f64; self.max_depth];
            run(&self.code, &mut stack, state, params)
        }
    }
}

fn lower(expr: &RateExpr, code: &mut Vec<Instr>) {
    match expr {
        RateExpr::Const(c) => code.push(Instr::PushConst(*c)),
        RateExpr::Param(i) => code.push(Instr::PushParam(*i)),
        RateExpr::Species(i) => code.push(Instr::PushSpecies(*i)),
        RateExpr::Neg(a) => {
            // (-1) * v is bit-identical to -v
            code.push(Instr::PushConst(-1.0));
            lower(a, code);
            code.push(Instr::Mul);
        }
        RateExpr::Add(a, b) => binary(a, b, Instr::Add, code),
        RateExpr::Sub(a, b) => binary(a, b, Instr::Sub, code),
        RateExpr::Mul(a, b) => binary(a, b, Instr::Mul, code),
        RateExpr::Div(a, b) => binary(a, b, Instr::Div, code),
        RateExpr::Pow(a, k) => {
            lower(a, code);
            code.push(Instr::PowInt(*k));
        }
    }
}

fn binary(a: &RateExpr, b: &RateExpr, op: Instr, code: &mut Vec<Instr>) {
    lower(a, code);
    lower(b, code);
    code.push(op);
}

#[inline]
fn run(code: &[Instr], stack: &mut [f64], state: &[i64], params: &[f64]) -> Result<f64, EvalError> {
    let mut sp = 0usize;
    for instr in code {
        match *instr {
            Instr::PushConst(c) => {
                stack[sp] = c;
                sp += 1;
            }
            Instr::PushSpecies(i) => {
                stack[sp] = *state.get(i).ok_or(EvalError::UnknownSpecies(i))? as f64;
                sp += 1;
            }
            Instr::PushParam(i) => {
                stack[sp] = *params.get(i).ok_or(EvalError::UnknownParameter(i))?;
                sp += 1;
            }
            Instr::Add => {
                sp -= 1;
                stack[sp - 1] += stack[sp];
            }
            Instr::Sub => {
                sp -= 1;
                stack[sp - 1] -= stack[sp];
            }
            Instr::Mul => {
                sp -= 1;
                stack[sp - 1] *= stack[sp];
            }
            Instr::Div => {
                sp -= 1;
                if stack[sp] == 0.0 {
                    return Err(EvalError::DivisionByZero);
                }
                stack[sp - 1] /= stack[sp];
            }
            Instr::PowInt(k) => {
                let base = stack[sp - 1];
                if base == 0.0 && k < 0 {
                    return Err(EvalError::DivisionByZero);
                }
                stack[sp - 1] = base.powi(k);
            }
        }
    }
    Ok(stack[0])
}
