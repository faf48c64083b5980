//! Textual grammar for observables and initial data:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor ('*' factor)*
//! factor := NUMBER | VAR ('^' UINT)?
//! ```
//!
//! Phase-space functions use the variables `x` and `k` (e.g.
//! `"x*k + 0.5*k^2"`); quantum operators use `q1 p1 q2 p2`, with `_sym`
//! marking Weyl symmetrization of mixed same-axis products (e.g.
//! `"q1*p1_sym"`); classical actions are polynomials in `x`.

use crate::analytic::Poly1;
use crate::error::{CeError, Result};
use crate::observables::{AxisMonomial, OperatorTerm, PhasePolynomial, QuantumOperatorSpec};

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Number(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Caret,
}

fn tokenize(input: &str) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    let chars: Vec<char> = input.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let ch = chars[i];
        match ch {
            c if c.is_whitespace() => i += 1,
            '+' => {
                out.push(Token::Plus);
                i += 1;
            }
            '-' => {
                out.push(Token::Minus);
                i += 1;
            }
            '*' => {
                out.push(Token::Star);
                i += 1;
            }
            '^' => {
                out.push(Token::Caret);
                i += 1;
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len()
                    && (chars[i].is_ascii_digit()
                        || chars[i] == '.'
                        || chars[i] == 'e'
                        || chars[i] == 'E'
                        || ((chars[i] == '+' || chars[i] == '-')
                            && i > start
                            && (chars[i - 1] == 'e' || chars[i - 1] == 'E')))
                {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                let v = text
                    .parse::<f64>()
                    .map_err(|_| CeError::Parse(format!("bad number `{text}`")))?;
                out.push(Token::Number(v));
            }
            c if c.is_ascii_alphabetic() => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push(Token::Ident(chars[start..i].iter().collect()));
            }
            other => {
                return Err(CeError::Parse(format!(
                    "unexpected character `{other}` at position {i}"
                )))
            }
        }
    }
    Ok(out)
}

/// One parsed multiplicative term: coefficient and per-variable powers.
#[derive(Debug, Default, Clone)]
struct RawTerm {
    coeff: f64,
    powers: Vec<(String, u32)>,
}

fn parse_terms(input: &str) -> Result<Vec<RawTerm>> {
    let tokens = tokenize(input)?;
    if tokens.is_empty() {
        return Err(CeError::Parse("empty expression".into()));
    }
    let mut terms = Vec::new();
    let mut i = 0;
    let mut sign = 1.0;
    // leading sign
    loop {
        match tokens.get(i) {
            Some(Token::Plus) => i += 1,
            Some(Token::Minus) => {
                sign = -sign;
                i += 1;
            }
            _ => break,
        }
    }
    loop {
        let mut term = RawTerm {
            coeff: sign,
            powers: Vec::new(),
        };
        // factors separated by '*'
        loop {
            match tokens.get(i) {
                Some(Token::Number(v)) => {
                    term.coeff *= v;
                    i += 1;
                }
                Some(Token::Ident(name)) => {
                    i += 1;
                    let mut power = 1u32;
                    if tokens.get(i) == Some(&Token::Caret) {
                        i += 1;
                        match tokens.get(i) {
                            Some(Token::Number(v)) if *v >= 0.0 && v.fract() == 0.0 => {
                                power = *v as u32;
                                i += 1;
                            }
                            other => {
                                return Err(CeError::Parse(format!(
                                    "expected integer power after `^`, found {other:?}"
                                )))
                            }
                        }
                    }
                    term.powers.push((name.clone(), power));
                }
                other => {
                    return Err(CeError::Parse(format!(
                        "expected a number or variable, found {other:?}"
                    )))
                }
            }
            if tokens.get(i) == Some(&Token::Star) {
                i += 1;
                continue;
            }
            break;
        }
        terms.push(term);
        // next separator
        match tokens.get(i) {
            None => break,
            Some(Token::Plus) => {
                sign = 1.0;
                i += 1;
            }
            Some(Token::Minus) => {
                sign = -1.0;
                i += 1;
            }
            other => {
                return Err(CeError::Parse(format!(
                    "expected `+` or `-` between terms, found {other:?}"
                )))
            }
        }
        // allow further unary signs
        loop {
            match tokens.get(i) {
                Some(Token::Minus) => {
                    sign = -sign;
                    i += 1;
                }
                Some(Token::Plus) => i += 1,
                _ => break,
            }
        }
    }
    Ok(terms)
}

/// Parse a phase-space polynomial in `x` and `k`.
pub fn parse_phase_polynomial(input: &str) -> Result<PhasePolynomial> {
    let mut table = Vec::new();
    for term in parse_terms(input)? {
        let mut m = 0u32;
        let mut n = 0u32;
        for (var, pw) in &term.powers {
            match var.as_str() {
                "x" => m += pw,
                "k" => n += pw,
                other => {
                    return Err(CeError::Parse(format!(
                        "unknown phase-space variable `{other}` (expected x, k)"
                    )))
                }
            }
        }
        if m > 255 || n > 255 {
            return Err(CeError::Parse("power out of range".into()));
        }
        table.push((term.coeff, m as u8, n as u8));
    }
    PhasePolynomial::new(&table)
}

/// Parse a classical action polynomial in `x`.
pub fn parse_action_poly(input: &str) -> Result<Poly1> {
    let mut coeffs: Vec<f64> = Vec::new();
    for term in parse_terms(input)? {
        let mut power = 0u32;
        for (var, pw) in &term.powers {
            match var.as_str() {
                "x" => power += pw,
                other => {
                    return Err(CeError::Parse(format!(
                        "unknown action variable `{other}` (expected x)"
                    )))
                }
            }
        }
        if power > 8 {
            return Err(CeError::Parse(format!(
                "action degree {power} beyond the supported range"
            )));
        }
        if coeffs.len() <= power as usize {
            coeffs.resize(power as usize + 1, 0.0);
        }
        coeffs[power as usize] += term.coeff;
    }
    Ok(Poly1::new(coeffs))
}

/// Parse a quantum operator over `q1 p1 q2 p2` (with `_sym` momentum markers
/// for mixed same-axis products).
pub fn parse_operator(input: &str) -> Result<QuantumOperatorSpec> {
    let mut terms = Vec::new();
    for term in parse_terms(input)? {
        let mut q = [0u32; 2]; // q powers per axis
        let mut p = [0u32; 2]; // p powers per axis
        let mut sym = [false; 2];
        for (var, pw) in &term.powers {
            match var.as_str() {
                "q1" => q[0] += pw,
                "q2" => q[1] += pw,
                "p1" => p[0] += pw,
                "p2" => p[1] += pw,
                "p1_sym" => {
                    p[0] += pw;
                    sym[0] = true;
                }
                "p2_sym" => {
                    p[1] += pw;
                    sym[1] = true;
                }
                other => {
                    return Err(CeError::Parse(format!(
                        "unknown operator variable `{other}` (expected q1, p1, q2, p2, p1_sym, p2_sym)"
                    )))
                }
            }
        }
        for axis in 0..2 {
            if q[axis] > 0 && p[axis] > 0 && !sym[axis] {
                return Err(CeError::Parse(format!(
                    "mixed q{n}*p{n} product needs the symmetrized form `q{n}*p{n}_sym`",
                    n = axis + 1
                )));
            }
            if q[axis] > 4 || p[axis] > 2 {
                return Err(CeError::Parse(format!(
                    "operator powers q^{} p^{} exceed the degree caps (q^4, p^2)",
                    q[axis], p[axis]
                )));
            }
        }
        terms.push(OperatorTerm {
            coeff: term.coeff,
            on_q1: AxisMonomial {
                q_pow: q[0] as u8,
                p_pow: p[0] as u8,
            },
            on_q2: AxisMonomial {
                q_pow: q[1] as u8,
                p_pow: p[1] as u8,
            },
        });
    }
    Ok(QuantumOperatorSpec::Composite(terms))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn parses_the_documented_examples() {
        let f = parse_phase_polynomial("x*k + 0.5*k^2").unwrap();
        assert_relative_eq!(f.eval(2.0, 3.0), 2.0 * 3.0 + 0.5 * 9.0, epsilon = 1e-14);

        let m = parse_operator("q1*p1_sym").unwrap();
        assert_eq!(m.label(), "q1*p1_sym");

        let s = parse_action_poly("0.3*x^2 - 1.5*x + 2").unwrap();
        assert_relative_eq!(s.eval(2.0), 0.3 * 4.0 - 3.0 + 2.0, epsilon = 1e-14);
    }

    #[test]
    fn negative_and_scientific_coefficients() {
        let f = parse_phase_polynomial("-x + 1e-3*k - -2*x^2").unwrap();
        assert_relative_eq!(f.eval(1.0, 1.0), -1.0 + 1e-3 + 2.0, epsilon = 1e-14);
    }

    #[test]
    fn rejects_unsymmetrized_mixed_products() {
        assert!(parse_operator("q1*p1").is_err());
        assert!(parse_operator("q1*p1_sym").is_ok());
        assert!(parse_operator("q1*p2").is_ok());
    }

    #[test]
    fn rejects_unknown_variables_and_degrees() {
        assert!(parse_phase_polynomial("x*y").is_err());
        assert!(parse_phase_polynomial("k^3").is_err());
        assert!(parse_operator("p1^3").is_err());
        assert!(parse_phase_polynomial("").is_err());
        assert!(parse_phase_polynomial("x +").is_err());
    }

    #[test]
    fn operator_round_trips_through_its_label() {
        for text in ["q1", "p2^2", "q1^2*q2", "q1*p1_sym + 0.5*p2^2"] {
            let op = parse_operator(text).unwrap();
            let label = op.label();
            let reparsed = parse_operator(&label).unwrap();
            assert_eq!(label, reparsed.label());
        }
    }
}
