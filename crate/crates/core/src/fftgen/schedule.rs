//! Cycle-driven list scheduler that hides pipeline latency and pads the remainder with
//! NOPs.

use super::emitter::{Role, Tag};
use crate::cycles::instruction_cost;
use crate::isa::{Instruction, Opcode};
use crate::machine::MachineConfig;

/// Pseudo-register standing for the coefficient cache.
const CACHE: usize = usize::MAX;

#[derive(Debug, Clone, Copy)]
struct Edge {
    to: usize,
    /// Read-after-write: the consumer must wait a full pipeline depth after the
    /// producer issues. Other edges only order issue.
    raw: bool,
}

fn reads(i: &Instruction) -> Vec<usize> {
    let mut v: Vec<usize> = i.reads().map(|r| r.index()).collect();
    if matches!(i.opcode, Opcode::MulReal | Opcode::MulImag) {
        v.push(CACHE);
    }
    v
}

fn writes(i: &Instruction) -> Vec<usize> {
    let mut v: Vec<usize> = i.writes().map(|r| r.index()).into_iter().collect();
    if i.opcode == Opcode::LodCoeff {
        v.push(CACHE);
    }
    v
}

fn dependences(code: &[Instruction], tags: &[Tag]) -> Vec<Vec<Edge>> {
    use std::collections::HashMap;
    let mut succ: Vec<Vec<Edge>> = vec![Vec::new(); code.len()];
    let mut last_write: HashMap<usize, usize> = HashMap::new();
    let mut readers: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut loads: Vec<usize> = Vec::new();
    let mut stores: Vec<usize> = Vec::new();
    let mut last_arith: Option<usize> = None;

    for (i, (instr, tag)) in code.iter().zip(tags).enumerate() {
        let rs = reads(instr);
        let ws = writes(instr);
        for r in &rs {
            if let Some(&w) = last_write.get(r) {
                succ[w].push(Edge { to: i, raw: true });
            }
        }
        for w in &ws {
            for &rd in readers.get(w).into_iter().flatten() {
                succ[rd].push(Edge { to: i, raw: false });
            }
            if let Some(&prev) = last_write.get(w) {
                succ[prev].push(Edge { to: i, raw: false });
            }
            readers.insert(*w, Vec::new());
            last_write.insert(*w, i);
        }
        for r in rs.into_iter().filter(|r| !ws.contains(r)) {
            readers.entry(r).or_default().push(i);
        }
        // Everything except address arithmetic and constants issues in emission order.
        if !matches!(tag.role, Role::Addressing | Role::TwiddleAddr) && instr.opcode != Opcode::Seti
        {
            if let Some(prev) = last_arith {
                succ[prev].push(Edge { to: i, raw: false });
            }
            last_arith = Some(i);
        }
        // Data loads and stores keep their relative order; twiddle tables are read-only.
        match (instr.opcode, tag.role) {
            (Opcode::Lod, Role::DataLoad) => {
                for &s in &stores {
                    succ[s].push(Edge { to: i, raw: false });
                }
                loads.push(i);
            }
            (Opcode::Save | Opcode::SaveBank, _) => {
                for &l in &loads {
                    succ[l].push(Edge { to: i, raw: false });
                }
                stores.push(i);
            }
            _ => {}
        }
    }
    succ
}

/// Reorders `code` so that no instruction reads a register less than a pipeline depth of
/// issue cycles after it was written, inserting NOPs only when nothing else can issue.
/// Loads, butterfly arithmetic and stores keep their order; address arithmetic and
/// constants fill the gaps. A ready SETI always issues first; among other ready
/// instructions the one with the longest latency path to the end goes first, ties broken
/// by original order.
pub fn schedule(code: &[Instruction], tags: &[Tag], config: &MachineConfig) -> Vec<Instruction> {
    assert_eq!(code.len(), tags.len());
    let n = code.len();
    let depth = config.pipeline_depth as u64;
    let cost: Vec<u64> = code.iter().map(|i| instruction_cost(i, config)).collect();
    let succ = dependences(code, tags);

    let mut height = vec![0u64; n];
    for i in (0..n).rev() {
        let mut h = cost[i];
        for e in &succ[i] {
            let lat = if e.raw { depth.max(cost[i]) } else { cost[i] };
            h = h.max(lat + height[e.to]);
        }
        height[i] = h;
    }

    let mut pending = vec![0usize; n];
    for edges in &succ {
        for e in edges {
            pending[e.to] += 1;
        }
    }
    let mut earliest = vec![0u64; n];
    let mut ready: Vec<usize> = (0..n).filter(|&i| pending[i] == 0).collect();
    let mut out = Vec::with_capacity(n);
    let mut now = 0u64;

    while !ready.is_empty() {
        let pick = ready
            .iter()
            .enumerate()
            .filter(|(_, &i)| earliest[i] <= now)
            .max_by(|(_, &a), (_, &b)| {
                let seti = |i: usize| code[i].opcode == Opcode::Seti;
                seti(a)
                    .cmp(&seti(b))
                    .then(height[a].cmp(&height[b]))
                    .then(b.cmp(&a))
            })
            .map(|(pos, _)| pos);
        let Some(pos) = pick else {
            let next = ready.iter().map(|&i| earliest[i]).min().expect("non-empty");
            for _ in now..next {
                out.push(Instruction::op0(Opcode::Nop));
            }
            now = next;
            continue;
        };
        let i = ready.swap_remove(pos);
        out.push(code[i]);
        for e in &succ[i] {
            if e.raw {
                earliest[e.to] = earliest[e.to].max(now + depth);
            }
            pending[e.to] -= 1;
            if pending[e.to] == 0 {
                ready.push(e.to);
            }
        }
        now += cost[i];
    }
    assert_eq!(out.iter().filter(|i| i.opcode != Opcode::Nop).count(), n);
    out
}
