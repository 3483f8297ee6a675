//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use slotjudge::Answer;

/// Reference tree, kept separate from the library's.
#[derive(Clone, Debug)]
pub enum T {
    Num(f64),
    Var(usize),
    Bin(char, Box<T>, Box<T>),
    Not(Box<T>),
    Call(&'static str, Box<T>, Box<T>),
}

pub fn gen(rng: &mut ChaCha8Rng, depth: u32, m: usize) -> T {
    if depth == 0 || rng.random_bool(0.3) {
        return if rng.random_bool(0.6) {
            T::Var(rng.random_range(1..=m))
        } else {
            T::Num(f64::from(rng.random_range(0..1000u32)) / 100.0)
        };
    }
    let sub = |rng: &mut ChaCha8Rng| Box::new(gen(rng, depth - 1, m));
    match rng.random_range(0..6) {
        0 => T::Bin('+', sub(rng), sub(rng)),
        1 => T::Bin('-', sub(rng), sub(rng)),
        2 => T::Bin('*', sub(rng), sub(rng)),
        3 => T::Not(sub(rng)),
        4 => T::Call("min", sub(rng), sub(rng)),
        _ => T::Call("max", sub(rng), sub(rng)),
    }
}

pub fn eval(t: &T, v: &[f64]) -> f64 {
    match t {
        T::Num(x) => *x,
        T::Var(k) => v[k - 1],
        T::Bin(op, a, b) => {
            let (x, y) = (eval(a, v), eval(b, v));
            match op {
                '+' => x + y,
                '-' => x - y,
                _ => x * y,
            }
        }
        T::Not(a) => 1.0 - eval(a, v),
        T::Call(f, a, b) => {
            let (x, y) = (eval(a, v), eval(b, v));
            if *f == "min" {
                if x < y {
                    x
                } else {
                    y
                }
            } else if x > y {
                x
            } else {
                y
            }
        }
    }
}

fn level(t: &T) -> u8 {
    match t {
        T::Bin('*', ..) => 2,
        T::Bin(..) => 1,
        _ => 3,
    }
}

fn pad(rng: &mut ChaCha8Rng) -> &'static str {
    [" ", "", "  ", "\t"][rng.random_range(0..4)]
}

/// Renders `t`, sometimes with redundant parentheses and uneven whitespace,
/// never omitting a needed parenthesis.
pub fn render(t: &T, rng: &mut ChaCha8Rng) -> String {
    let s = match t {
        T::Num(x) => format!("{x}"),
        T::Var(k) => format!("r{k}"),
        T::Not(a) => format!("not({}{})", pad(rng), render(a, rng)),
        T::Call(f, a, b) => format!("{f}({},{}{})", render(a, rng), pad(rng), render(b, rng)),
        T::Bin(op, a, b) => {
            let p = level(t);
            let side = |e: &T, needs: bool, rng: &mut ChaCha8Rng| {
                let inner = render(e, rng);
                if needs || rng.random_bool(0.1) {
                    format!("({inner})")
                } else {
                    inner
                }
            };
            let l = side(a, level(a) < p, rng);
            let r = side(b, level(b) <= p, rng);
            format!("{l}{}{op}{}{r}", pad(rng), pad(rng))
        }
    };
    if rng.random_bool(0.05) {
        format!("({s})")
    } else {
        s
    }
}

pub fn answers(rng: &mut ChaCha8Rng, m: usize) -> Vec<Answer> {
    (0..m)
        .map(|_| Answer::from_bool(rng.random_bool(0.5)))
        .collect()
}
