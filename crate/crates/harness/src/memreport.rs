//! Exact slot-element counts of Amos versus AdamW.

use std::fmt::Write as _;

use amos_core::optim::{OptimizerKind, ParamSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryReport {
    /// Elements of Amos `v` plus `b`.
    pub amos_vb: usize,
    /// Elements of the optional Amos momentum.
    pub amos_m: usize,
    /// Elements of AdamW `m` plus `v`.
    pub adamw: usize,
    pub momentum: bool,
}

impl MemoryReport {
    pub fn amos_total(&self) -> usize {
        self.amos_vb + if self.momentum { self.amos_m } else { 0 }
    }

    /// Amos / AdamW as an exact fraction.
    pub fn ratio_parts(&self) -> (usize, usize) {
        (self.amos_total(), self.adamw)
    }

    pub fn ratio(&self) -> f64 {
        self.amos_total() as f64 / self.adamw as f64
    }
}

fn count(kind: OptimizerKind, specs: &[ParamSpec], slot: &str) -> usize {
    specs
        .iter()
        .flat_map(|s| kind.slot_layout(s))
        .filter(|(name, _)| slot.is_empty() || *name == slot)
        .map(|(_, shape)| shape.iter().product::<usize>())
        .sum()
}

/// Counts for `specs`, whose reduction masks encode the memory mode.
pub fn slot_memory_report(specs: &[ParamSpec], momentum: bool) -> MemoryReport {
    let amos = OptimizerKind::Amos { momentum: true };
    MemoryReport {
        amos_vb: count(amos, specs, "v") + count(amos, specs, "b"),
        amos_m: count(amos, specs, "m"),
        adamw: count(OptimizerKind::AdamW, specs, ""),
        momentum,
    }
}

pub fn render(report: &MemoryReport) -> String {
    let mut out = String::new();
    let (num, den) = report.ratio_parts();
    writeln!(out, "amos v+b      {}", report.amos_vb).unwrap();
    writeln!(out, "amos m        {}{}", report.amos_m, if report.momentum { "" } else { " (disabled)" }).unwrap();
    writeln!(out, "amos total    {}", report.amos_total()).unwrap();
    writeln!(out, "adamw m+v     {}", report.adamw).unwrap();
    writeln!(out, "ratio         {num}/{den} = {:.6}", report.ratio()).unwrap();
    out
}
