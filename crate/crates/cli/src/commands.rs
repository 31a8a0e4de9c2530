//! The five commands, their reports, and the exit-code mapping.

use crate::doc::{MapDocument, OdeDocument, SeriesDoc};
use crate::{Format, Kind, Method, What};
use fibrenorm::ck::{normalize_ck, CkStepReport};
use fibrenorm::gen;
use fibrenorm::homology::{
    composite_map, formal_normalize, kernel_basis, matches_flat_symmetries, StageRecord,
};
use fibrenorm::invariants::{
    check_flat, check_normal, condition_defect, invariants_at_origin, relative_invariants,
    NormalCondition,
};
use fibrenorm::jet::{apply_map, FibreMap, Ode};
use fibrenorm::Error;
use serde_json::{json, Value};
use std::fs;
use std::path::{Path, PathBuf};

/// A command failure with a stable exit code: 1 for malformed input, 2 for
/// a violated mathematical precondition, 3 for an internal consistency
/// failure.
#[derive(Debug)]
pub enum CliError {
    Malformed(String),
    Math(Error),
    Consistency(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Malformed(_) => 1,
            CliError::Math(e) => match e {
                Error::ZeroConstantTerm
                | Error::NonzeroConstantSubstituent { .. }
                | Error::OrderExceeded { .. }
                | Error::InvalidMap { .. }
                | Error::PreconditionD1
                | Error::PreconditionOriginSlope
                | Error::PreconditionD1D2
                | Error::PreconditionD1D2D3
                | Error::NotNormal { .. } => 2,
                Error::FlowEvaluation { .. }
                | Error::NotNormalBelow { .. }
                | Error::NotSemiHomogeneous { .. }
                | Error::UnsolvableDefect { .. }
                | Error::Internal { .. } => 3,
            },
            CliError::Consistency(_) => 3,
        }
    }

    pub fn message(&self) -> String {
        match self {
            CliError::Malformed(s) | CliError::Consistency(s) => s.clone(),
            CliError::Math(e) => e.to_string(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Math(e)
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Malformed(format!("cannot read {}: {e}", path.display())))
}

fn write_atomic(path: &Path, content: &str) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("output");
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    fs::write(&tmp, content)
        .map_err(|e| CliError::Malformed(format!("cannot write {}: {e}", tmp.display())))?;
    fs::rename(&tmp, path)
        .map_err(|e| CliError::Malformed(format!("cannot rename into {}: {e}", path.display())))?;
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    PathBuf::from(format!("{}{suffix}", path.display()))
}

/// Loads the document and truncates the equation to the effective order:
/// the smaller of the document order and the requested order.
fn load_ode(path: &Path, order: i64) -> Result<(Ode, i64), CliError> {
    let doc = OdeDocument::parse(&read_file(path)?).map_err(CliError::Malformed)?;
    let n = doc.order.min(order);
    let e = doc.to_ode();
    Ok((Ode::new(e.rhs().truncate(n)), n))
}

pub(crate) fn write_stdout(payload: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    if let Err(err) = out.write_all(payload.as_bytes()).and_then(|()| out.flush()) {
        // A consumer that stops reading (head, grep -q) is not an error; any
        // requested output files are already on disk at this point.
        if err.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("error: cannot write to stdout: {err}");
        std::process::exit(3);
    }
}

fn emit(format: Format, text: String, machine: Value) {
    match format {
        Format::Text => write_stdout(&text),
        Format::Json => write_stdout(&format!("{machine}\n")),
    }
}

fn condition_list(conditions: &[NormalCondition]) -> Vec<String> {
    conditions.iter().map(|c| c.to_string()).collect()
}

fn stage_json(s: &StageRecord) -> Value {
    json!({
        "alpha": s.alpha,
        "defect": SeriesDoc::from_series(&s.defect),
        "correction_f": SeriesDoc::from_series(s.correction.f()),
        "correction_g": SeriesDoc::from_series(s.correction.g()),
    })
}

fn step_json(r: &CkStepReport) -> Value {
    let solved: Value = r
        .solved
        .iter()
        .map(|(name, s)| ((*name).to_string(), json!(SeriesDoc::from_series(s))))
        .collect::<serde_json::Map<String, Value>>()
        .into();
    json!({
        "step": r.step.to_string(),
        "solved": solved,
        "conditions_after": condition_list(&r.conditions_after),
        "output_order": r.output_order,
    })
}

pub fn normalize(
    input: &Path,
    method: Method,
    order: i64,
    format: Format,
    output: Option<&Path>,
) -> Result<(), CliError> {
    let (e, n) = load_ode(input, order)?;
    let mut formal: Option<(Ode, Vec<StageRecord>, FibreMap)> = None;
    let mut ck: Option<(Ode, FibreMap, Vec<CkStepReport>)> = None;
    if method == Method::Formal || method == Method::Both {
        let (k, stages) = formal_normalize(&e, n)?;
        let map = composite_map(&stages, n)?;
        formal = Some((k, stages, map));
    }
    if method == Method::Ck || method == Method::Both {
        ck = Some(normalize_ck(&e, n)?);
    }
    if let (Some((kf, _, _)), Some((kc, _, _))) = (&formal, &ck) {
        if !kf.rhs().eq_to_order(kc.rhs(), n) {
            return Err(CliError::Consistency(format!(
                "normalization routes disagree at order {n}: staged gives {}, four-step gives {}",
                kf.rhs(),
                kc.rhs()
            )));
        }
    }
    let normal_form = match (&ck, &formal) {
        (Some((k, _, _)), _) => k.clone(),
        (None, Some((k, _, _))) => k.clone(),
        (None, None) => unreachable!("at least one method always runs"),
    };
    let doc = OdeDocument::from_ode(&normal_form);
    let formal_map_doc = formal
        .as_ref()
        .map(|(_, _, m)| MapDocument::from_map(m, n));
    let ck_map_doc = ck.as_ref().map(|(_, m, _)| MapDocument::from_map(m, n));
    let origin = if n >= 3 {
        let (i1, i2, i3) = invariants_at_origin(&normal_form)?;
        Some([i1.frac_string(), i2.frac_string(), i3.frac_string()])
    } else {
        None
    };

    let mut text = String::new();
    text.push_str(&format!("order: {n}\n"));
    if let Some((_, stages, _)) = &formal {
        text.push_str(&format!("staged normalization: {} stage(s)\n", stages.len()));
        for s in stages {
            text.push_str(&format!(
                "  weight {}: removed {} term(s)\n",
                s.alpha,
                s.defect.terms().len()
            ));
        }
    }
    if let Some((_, _, reports)) = &ck {
        text.push_str("four-step normalization:\n");
        for r in reports {
            text.push_str(&format!(
                "  step {}: conditions now [{}]\n",
                r.step,
                condition_list(&r.conditions_after).join(", ")
            ));
        }
    }
    if method == Method::Both {
        text.push_str("routes agree: yes\n");
    }
    text.push_str(&format!("normal form: {}\n", normal_form.rhs()));
    if let Some([i1, i2, i3]) = &origin {
        text.push_str(&format!("origin invariants: ({i1}, {i2}, {i3})\n"));
    }

    let machine = json!({
        "command": "normalize",
        "method": match method { Method::Formal => "formal", Method::Ck => "ck", Method::Both => "both" },
        "order": n,
        "normal_form": doc,
        "origin_invariants": origin,
        "formal": formal.as_ref().map(|(_, stages, _)| json!({
            "stages": stages.iter().map(stage_json).collect::<Vec<_>>(),
            "map": formal_map_doc,
        })),
        "ck": ck.as_ref().map(|(_, _, reports)| json!({
            "steps": reports.iter().map(step_json).collect::<Vec<_>>(),
            "map": ck_map_doc,
        })),
    });
    if let Some(path) = output {
        write_atomic(path, &serde_json::to_string(&doc).expect("serializable"))?;
        if let Some(md) = &formal_map_doc {
            write_atomic(
                &with_suffix(path, ".formal.map.json"),
                &serde_json::to_string(md).expect("serializable"),
            )?;
        }
        if let Some(md) = &ck_map_doc {
            write_atomic(
                &with_suffix(path, ".ck.map.json"),
                &serde_json::to_string(md).expect("serializable"),
            )?;
        }
    }
    emit(format, text, machine);
    Ok(())
}

pub fn check(input: &Path, what: What, order: i64, format: Format) -> Result<(), CliError> {
    let (e, n) = load_ode(input, order)?;
    match what {
        What::Normal => {
            let (ok, _) = check_normal(&e);
            let mut text = format!("order: {n}\nnormal: {ok}\n");
            let mut conditions = Vec::new();
            for c in NormalCondition::ALL {
                let defect = condition_defect(&e, c);
                let holds = defect.is_zero();
                text.push_str(&format!(
                    "  {c}: {}\n",
                    if holds { "holds".to_string() } else { format!("violated by {defect}") }
                ));
                conditions.push(json!({
                    "condition": c.to_string(),
                    "holds": holds,
                    "defect": SeriesDoc::from_series(&defect),
                }));
            }
            let machine = json!({
                "command": "check",
                "what": "normal",
                "order": n,
                "normal": ok,
                "conditions": conditions,
            });
            emit(format, text, machine);
        }
        What::Invariants => {
            let triple = relative_invariants(&e);
            let origin = invariants_at_origin(&e).ok();
            let mut text = format!(
                "order: {n}\nI1 = {}\nI2 = {}\nI3 = {}\n",
                triple.i1, triple.i2, triple.i3
            );
            match &origin {
                Some((a, b, c)) => text.push_str(&format!(
                    "origin values: ({}, {}, {})\n",
                    a.frac_string(),
                    b.frac_string(),
                    c.frac_string()
                )),
                None => text.push_str(
                    "origin values: only defined in normal form; run normalize first\n",
                ),
            }
            let machine = json!({
                "command": "check",
                "what": "invariants",
                "order": n,
                "i1": SeriesDoc::from_series(&triple.i1),
                "i2": SeriesDoc::from_series(&triple.i2),
                "i3": SeriesDoc::from_series(&triple.i3),
                "origin": origin.map(|(a, b, c)| vec![a.frac_string(), b.frac_string(), c.frac_string()]),
            });
            emit(format, text, machine);
        }
        What::Flat => {
            let (already_normal, _) = check_normal(&e);
            let mut text = String::new();
            let target = if already_normal {
                e
            } else {
                text.push_str("note: input is not in normal form; normalizing first\n");
                let (k, _) = formal_normalize(&e, n)?;
                k
            };
            let report = check_flat(&target)?;
            text.push_str(&format!(
                "order: {n}\nflat: {}\norder checked: {}\n",
                report.is_flat, report.order_checked
            ));
            if !report.is_flat {
                text.push_str(&format!(
                    "invariants: I1 = {}, I2 = {}, I3 = {}\n",
                    report.invariants.i1, report.invariants.i2, report.invariants.i3
                ));
                text.push_str(&format!(
                    "relation residuals: {} and {}\n",
                    report.relation1_residual, report.relation2_residual
                ));
            }
            let machine = json!({
                "command": "check",
                "what": "flat",
                "order": n,
                "normalized_first": !already_normal,
                "flat": report.is_flat,
                "order_checked": report.order_checked,
                "i1": SeriesDoc::from_series(&report.invariants.i1),
                "i2": SeriesDoc::from_series(&report.invariants.i2),
                "i3": SeriesDoc::from_series(&report.invariants.i3),
                "p2_part": SeriesDoc::from_series(&report.m),
                "p1_part": SeriesDoc::from_series(&report.n),
                "relation1_residual": SeriesDoc::from_series(&report.relation1_residual),
                "relation2_residual": SeriesDoc::from_series(&report.relation2_residual),
            });
            emit(format, text, machine);
        }
    }
    Ok(())
}

pub fn apply(
    input: &Path,
    map_path: &Path,
    order: i64,
    format: Format,
    output: Option<&Path>,
) -> Result<(), CliError> {
    let (e, n) = load_ode(input, order)?;
    let map_doc = MapDocument::parse(&read_file(map_path)?).map_err(CliError::Malformed)?;
    let map = map_doc.to_map()?;
    let out = apply_map(&e, &map)?;
    let doc = OdeDocument::from_ode(&out);
    let text = format!(
        "order: {n}\ntransformed equation: {}\nvalid order: {}\n",
        out.rhs(),
        doc.order
    );
    let machine = json!({
        "command": "apply",
        "order": n,
        "result": doc,
    });
    if let Some(path) = output {
        write_atomic(path, &serde_json::to_string(&doc).expect("serializable"))?;
    }
    emit(format, text, machine);
    Ok(())
}

pub fn symmetries(order: i64, format: Format) -> Result<(), CliError> {
    if order < 3 {
        return Err(CliError::Malformed(format!(
            "--order {order} is too small: the quadratic symmetry only appears from order 3"
        )));
    }
    let basis = kernel_basis(order);
    if basis.len() != 6 {
        return Err(CliError::Consistency(format!(
            "symmetry algebra at order {order} has dimension {}, expected 6",
            basis.len()
        )));
    }
    if !matches_flat_symmetries(&basis) {
        return Err(CliError::Consistency(format!(
            "symmetry algebra at order {order} does not span the classical six generators"
        )));
    }
    let mut text = format!("order: {order}\ndimension: 6\nmatches classical span: yes\n");
    for (idx, c) in basis.iter().enumerate() {
        text.push_str(&format!("  v{}: f = {}, g = {}\n", idx + 1, c.f(), c.g()));
    }
    let machine = json!({
        "command": "symmetries",
        "order": order,
        "dimension": basis.len(),
        "matches_classical_span": true,
        "basis": basis.iter().map(|c| json!({
            "f": SeriesDoc::from_series(c.f()),
            "g": SeriesDoc::from_series(c.g()),
        })).collect::<Vec<_>>(),
    });
    emit(format, text, machine);
    Ok(())
}

pub fn generate(
    kind: Kind,
    seed: u64,
    order: i64,
    output: Option<&Path>,
) -> Result<(), CliError> {
    if order < 0 {
        return Err(CliError::Malformed(format!("negative --order {order}")));
    }
    let mut r = gen::rng(seed);
    let (ode, map_doc): (Ode, Option<MapDocument>) = match kind {
        Kind::Random => (gen::random_ode(&mut r, order), None),
        Kind::Normal => (gen::random_normal_ode(&mut r, order), None),
        Kind::Flat => {
            let m = gen::random_fibre_map(&mut r, order);
            let e = apply_map(&Ode::flat(order), &m)?;
            (e, Some(MapDocument::from_map(&m, order)))
        }
    };
    let doc = OdeDocument::from_ode(&ode);
    #[derive(serde::Serialize)]
    struct Payload {
        ode: OdeDocument,
        #[serde(skip_serializing_if = "Option::is_none")]
        map: Option<MapDocument>,
    }
    let payload = Payload {
        ode: doc.clone(),
        map: map_doc.clone(),
    };
    if let Some(path) = output {
        write_atomic(path, &serde_json::to_string(&doc).expect("serializable"))?;
        if let Some(md) = &map_doc {
            write_atomic(
                &with_suffix(path, ".map.json"),
                &serde_json::to_string(md).expect("serializable"),
            )?;
        }
    }
    let mut line = serde_json::to_string(&payload).expect("serializable");
    line.push('\n');
    write_stdout(&line);
    Ok(())
}
