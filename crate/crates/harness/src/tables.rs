//! Printable eta tables for the standard Transformer layer sets.

use std::fmt::Write as _;

use amos_core::eta::{bert_layer_decls, resolve_etas, t5_layer_decls, LayerDecl};
use anyhow::Result;

/// `(row label, eta)` for each declared variable category.
pub fn resolve_rows(rows: Vec<(&'static str, LayerDecl)>) -> Result<Vec<(&'static str, f64)>> {
    let decls: Vec<LayerDecl> = rows.iter().map(|(_, d)| d.clone()).collect();
    let etas = resolve_etas(&decls)?;
    Ok(rows.iter().map(|(label, d)| (*label, etas[&d.name])).collect())
}

pub fn bert_table(d: usize, m: usize) -> Result<Vec<(&'static str, f64)>> {
    resolve_rows(bert_layer_decls(d, m))
}

pub fn t5_table(d: usize, m: usize, h: usize) -> Result<Vec<(&'static str, f64)>> {
    resolve_rows(t5_layer_decls(d, m, h))
}

pub fn render(title: &str, rows: &[(&'static str, f64)]) -> String {
    let mut out = format!("{title}\n");
    for (label, eta) in rows {
        writeln!(out, "{label:<30} {eta:.9}").unwrap();
    }
    out
}
