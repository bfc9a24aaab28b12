#![allow(dead_code)]

use std::collections::{BTreeSet, HashSet, VecDeque};

use diser::grammar::{Grammar, Symbol, Terminal, TerminalKind, Variable};

/// Every kind-sequence of length <= `max_len` in the grammar's language,
/// found by breadth-first leftmost expansion of sentential forms.
pub fn enumerate_language(g: &Grammar, max_len: usize) -> BTreeSet<Vec<TerminalKind>> {
    let mut out = BTreeSet::new();
    let mut seen: HashSet<Vec<Symbol>> = HashSet::new();
    let start = vec![Symbol::Var(Variable::R)];
    let mut queue = VecDeque::from([start.clone()]);
    seen.insert(start);
    while let Some(form) = queue.pop_front() {
        let terminals = form.iter().filter(|s| matches!(s, Symbol::Term(_))).count();
        if terminals > max_len {
            continue;
        }
        let Some(idx) = form.iter().position(|s| matches!(s, Symbol::Var(_))) else {
            out.insert(
                form.iter()
                    .map(|s| match s {
                        Symbol::Term(k) => *k,
                        Symbol::Var(_) => unreachable!(),
                    })
                    .collect(),
            );
            continue;
        };
        let Symbol::Var(head) = form[idx] else { unreachable!() };
        for p in g.productions().iter().filter(|p| p.head == head) {
            let mut next = form[..idx].to_vec();
            next.extend(p.body.iter().copied());
            next.extend(form[idx + 1..].iter().copied());
            if seen.insert(next.clone()) {
                queue.push_back(next);
            }
        }
    }
    out
}

pub fn terminal_of(kind: TerminalKind) -> Terminal {
    match kind {
        TerminalKind::Illumination => Terminal::light(),
        TerminalKind::Optic => Terminal::optic(),
        TerminalKind::Sensor => Terminal::sensor(),
        TerminalKind::Algo1 => Terminal::algo1("a_nn"),
        TerminalKind::Algo2 => Terminal::algo2("a_control"),
    }
}

/// All kind-sequences of length 1..=max_len.
pub fn all_sequences(max_len: usize) -> Vec<Vec<TerminalKind>> {
    let mut out = Vec::new();
    let mut layer: Vec<Vec<TerminalKind>> = vec![vec![]];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for seq in &layer {
            for k in TerminalKind::ALL {
                let mut s = seq.clone();
                s.push(k);
                next.push(s);
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

/// GAE by the definition: the discounted sum of one-step TD errors up to
/// the end of each episode.
pub fn gae_brute_force(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, lambda: f64) -> Vec<f64> {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    for t in 0..n {
        let mut acc = 0.0;
        let mut w = 1.0;
        for l in t..n {
            let next = if dones[l] || l + 1 == n { 0.0 } else { values[l + 1] };
            acc += w * (rewards[l] + gamma * next - values[l]);
            if dones[l] {
                break;
            }
            w *= gamma * lambda;
        }
        adv[t] = acc;
    }
    adv
}

/// Largest relative gap between `grad` and central differences of `f`.
pub fn max_fd_relative_error(f: impl Fn(&[f64]) -> f64, x: &[f64], grad: &[f64], eps: f64) -> f64 {
    let mut p = x.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        p[i] = x[i] + eps;
        let hi = f(&p);
        p[i] = x[i] - eps;
        let lo = f(&p);
        p[i] = x[i];
        let fd = (hi - lo) / (2.0 * eps);
        worst = worst.max((fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-6));
    }
    worst
}
