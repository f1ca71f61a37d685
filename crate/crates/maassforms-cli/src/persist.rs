//! Coefficient-table persistence.
//!
//! Tables are stored as JSON with every number as a decimal string carrying
//! enough digits to reproduce the binary value exactly at the recorded
//! precision, so persist -> load is bit-identical.

use maassforms::bigarith::{make_context, PrecisionContext};
use maassforms::error::{Error, Result};
use maassforms::maassform::{
    CoefficientTable, HarmonicParams, Mode, PrincipalPart, RunMetadata, TableEntry,
};
use maassforms::specialfun::WeightParam;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Serialize, Deserialize)]
pub struct PrincipalTermFile {
    pub n: i64,
    pub h: u32,
    pub re: String,
    pub im: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EntryFile {
    pub n: i64,
    pub h: u32,
    pub re: String,
    pub im: String,
    pub err_bound: String,
    pub phase: u8,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TableFile {
    pub schema: u32,
    #[serde(rename = "N")]
    pub n: u32,
    pub weight: String,
    pub rep: String,
    pub mode: String,
    pub precision_digits: u32,
    pub y: String,
    pub q: u32,
    pub m0: u32,
    pub eps: String,
    pub residual_bound: Option<String>,
    pub inv_norm: Option<String>,
    pub coeff_bound: Option<String>,
    pub principal_part: Vec<PrincipalTermFile>,
    pub entries: Vec<EntryFile>,
}

pub fn table_to_file(table: &CoefficientTable) -> TableFile {
    let params = table.params();
    let meta = table.meta();
    let ctx = make_context(meta.precision_digits).expect("stored precision is valid");
    let fmt = |x: &maassforms::bigarith::BigReal| ctx.format_decimal(x);
    TableFile {
        schema: 1,
        n: params.n_level(),
        weight: params.weight().to_string(),
        rep: if params.conjugated() { "rho_bar" } else { "rho" }.to_string(),
        mode: match params.mode() {
            Mode::Harmonic => "harmonic",
            Mode::Holomorphic => "holomorphic",
        }
        .to_string(),
        precision_digits: meta.precision_digits,
        y: fmt(&meta.y),
        q: meta.q,
        m0: meta.m0,
        eps: fmt(&meta.eps),
        residual_bound: meta.residual_bound.as_ref().map(&fmt),
        inv_norm: meta.inv_norm.as_ref().map(&fmt),
        coeff_bound: meta.coeff_bound.as_ref().map(&fmt),
        principal_part: table
            .principal()
            .terms()
            .iter()
            .map(|(&(n, h), v)| PrincipalTermFile {
                n,
                h,
                re: fmt(v.real()),
                im: fmt(v.imag()),
            })
            .collect(),
        entries: table
            .entries()
            .iter()
            .map(|(&(n, h), e)| EntryFile {
                n,
                h,
                re: fmt(e.value.real()),
                im: fmt(e.value.imag()),
                err_bound: fmt(&e.err_bound),
                phase: e.phase,
            })
            .collect(),
    }
}

pub fn file_to_table(file: &TableFile) -> Result<CoefficientTable> {
    if file.schema != 1 {
        return Err(Error::invalid(format!(
            "unsupported table schema {}",
            file.schema
        )));
    }
    let ctx = make_context(file.precision_digits)?;
    let k = WeightParam::parse(&file.weight)?;
    let conjugated = match file.rep.as_str() {
        "rho" => false,
        "rho_bar" => true,
        other => return Err(Error::invalid(format!("unknown rep {other:?}"))),
    };
    let mode = match file.mode.as_str() {
        "harmonic" => Mode::Harmonic,
        "holomorphic" => Mode::Holomorphic,
        other => return Err(Error::invalid(format!("unknown mode {other:?}"))),
    };
    let params = HarmonicParams::new(file.n, k, conjugated, mode)?;
    let principal = PrincipalPart::new(
        &params,
        file.principal_part
            .iter()
            .map(|t| -> Result<_> {
                Ok((
                    (t.n, t.h),
                    ctx.complex_from(ctx.parse_decimal(&t.re)?, ctx.parse_decimal(&t.im)?),
                ))
            })
            .collect::<Result<Vec<_>>>()?,
    )?;
    let mut entries = BTreeMap::new();
    for e in &file.entries {
        entries.insert(
            (e.n, e.h),
            TableEntry {
                value: ctx.complex_from(ctx.parse_decimal(&e.re)?, ctx.parse_decimal(&e.im)?),
                err_bound: ctx.parse_decimal(&e.err_bound)?,
                phase: e.phase,
            },
        );
    }
    let parse_opt = |s: &Option<String>| -> Result<Option<maassforms::bigarith::BigReal>> {
        s.as_ref().map(|v| ctx.parse_decimal(v)).transpose()
    };
    let meta = RunMetadata {
        y: ctx.parse_decimal(&file.y)?,
        q: file.q,
        m0: file.m0,
        eps: ctx.parse_decimal(&file.eps)?,
        precision_digits: file.precision_digits,
        residual_bound: parse_opt(&file.residual_bound)?,
        inv_norm: parse_opt(&file.inv_norm)?,
        coeff_bound: parse_opt(&file.coeff_bound)?,
    };
    CoefficientTable::new(params, principal, entries, meta)
}

pub fn save_table(table: &CoefficientTable, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)
                .map_err(|e| Error::invalid(format!("cannot create {}: {e}", dir.display())))?;
        }
    }
    let file = table_to_file(table);
    let text = serde_json::to_string_pretty(&file)
        .map_err(|e| Error::invalid(format!("serialization failed: {e}")))?;
    std::fs::write(path, text)
        .map_err(|e| Error::invalid(format!("cannot write {}: {e}", path.display())))
}

pub fn load_table(path: &Path) -> Result<CoefficientTable> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::MissingData(format!("cannot read table {}: {e}", path.display())))?;
    let file: TableFile = serde_json::from_str(&text)
        .map_err(|e| Error::invalid(format!("bad table file {}: {e}", path.display())))?;
    file_to_table(&file)
}

/// Flat CSV of the coefficients: `n,h,Delta,re,im,err_bound,phase`.
pub fn write_coeff_csv(table: &CoefficientTable, path: &Path) -> Result<()> {
    let meta = table.meta();
    let ctx = make_context(meta.precision_digits)?;
    let mut out = String::from("n,h,Delta,re,im,err_bound,phase\n");
    for (&(n, h), e) in table.entries() {
        let delta = maassforms::maassform::index_to_delta(table.params(), n);
        out.push_str(&format!(
            "{n},{h},{delta},{},{},{},{}\n",
            ctx.format_decimal(e.value.real()),
            ctx.format_decimal(e.value.imag()),
            ctx.format_decimal(&e.err_bound),
            e.phase
        ));
    }
    std::fs::write(path, out)
        .map_err(|e| Error::invalid(format!("cannot write {}: {e}", path.display())))
}

/// Needed by report emission and tests.
pub fn context_of(table: &CoefficientTable) -> Result<PrecisionContext> {
    make_context(table.meta().precision_digits)
}
