use serde::Deserialize;
use serde_yaml::Value;

use super::{Injection, Outcome, Risk, ScenarioError, ScenarioResult, ScenarioSpec, Thresholds, BASELINE};
use crate::manifest::{yaml_documents, DocCtx, ManifestError};

pub const CSV_HEADER: [&str; 4] = ["strategy", "latency_cycles", "delta_pct", "risk"];

const INFEASIBLE: &str = "INFEASIBLE";

pub fn write_csv(results: &[ScenarioResult]) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for r in results {
        let latency = r.latency().map_or(INFEASIBLE.to_string(), |l| l.to_string());
        let delta = r.delta_pct.map_or(String::new(), |d| d.to_string());
        w.write_record([r.name.as_str(), &latency, &delta, r.risk.as_str()])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

/// Parses a table written by [`write_csv`]. The baseline latency comes from
/// the `baseline` row, which must be present unless the table is empty.
pub fn read_csv(text: &str) -> Result<Vec<ScenarioResult>, ScenarioError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| ScenarioError::Csv(e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(ScenarioError::Csv(format!(
            "header is `{}`, expected `{}`",
            header.iter().collect::<Vec<_>>().join(","),
            CSV_HEADER.join(",")
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| ScenarioError::Csv(e.to_string()))?;
        let line = i + 2;
        let bad = |what: &str| ScenarioError::Csv(format!("line {line}: bad {what}"));
        let latency = match &rec[1] {
            INFEASIBLE => None,
            s => Some(s.parse::<u64>().map_err(|_| bad("latency_cycles"))?),
        };
        let delta = match &rec[2] {
            "" => None,
            s => Some(s.parse::<i64>().map_err(|_| bad("delta_pct"))?),
        };
        let risk = Risk::parse(&rec[3]).ok_or_else(|| bad("risk"))?;
        if latency.is_none() != delta.is_none() || latency.is_none() != (risk == Risk::CertainFailure) {
            return Err(bad("row (latency, delta and risk disagree)"));
        }
        rows.push((rec[0].to_string(), latency, delta, risk));
    }
    if rows.is_empty() {
        return Ok(Vec::new());
    }
    let baseline = rows
        .iter()
        .find(|r| r.0 == BASELINE)
        .and_then(|r| r.1)
        .ok_or_else(|| ScenarioError::Csv("no feasible `baseline` row".into()))?;
    Ok(rows
        .into_iter()
        .map(|(name, latency, delta_pct, risk)| ScenarioResult {
            name,
            outcome: latency.map_or(Outcome::Infeasible, |latency| Outcome::Feasible { latency }),
            baseline,
            delta_pct,
            risk,
        })
        .collect())
}

fn grouped(n: u64) -> String {
    let s = n.to_string();
    let mut out = String::new();
    for (i, ch) in s.chars().enumerate() {
        if i > 0 && (s.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

/// Fixed-width text table in ranking order.
pub fn render_table(results: &[ScenarioResult], th: &Thresholds) -> String {
    let head = ["Strategy", "Latency (clock cycles)", "Delta", "Risk", "Note"];
    let rows: Vec<[String; 5]> = results
        .iter()
        .map(|r| {
            [
                r.name.clone(),
                r.latency().map_or(INFEASIBLE.to_string(), grouped),
                r.delta_pct.map_or("-".to_string(), |d| format!("{d:+}%")),
                r.risk.to_string(),
                if r.recommended(th) {
                    String::new()
                } else {
                    "not recommended".into()
                },
            ]
        })
        .collect();
    let mut width = head.map(str::len);
    for r in &rows {
        for (w, c) in width.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: [&str; 5]| {
        let mut s = format!(
            "{:<w0$}  {:>w1$}  {:>w2$}  {:<w3$}  {}",
            cells[0],
            cells[1],
            cells[2],
            cells[3],
            cells[4],
            w0 = width[0],
            w1 = width[1],
            w2 = width[2],
            w3 = width[3]
        );
        s.truncate(s.trim_end().len());
        s.push('\n');
        s
    };
    let mut out = line(head);
    out.push_str(&line(width.map(|w| "-".repeat(w)).each_ref().map(String::as_str)));
    for r in &rows {
        out.push_str(&line(r.each_ref().map(String::as_str)));
    }
    out
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecBody {
    #[serde(default)]
    baseline: Option<String>,
    #[serde(default)]
    injections: Vec<Injection>,
}

/// `kind: scenario` documents from a YAML stream.
pub fn parse_scenario_docs(text: &str) -> Result<Vec<ScenarioSpec>, ScenarioError> {
    let mut out = Vec::new();
    for (i, v) in yaml_documents(text)?.iter().enumerate() {
        let ctx = DocCtx::new(i + 1, v)?;
        let (kind, name, spec) = ctx.header()?;
        if kind != "scenario" {
            return Err(ManifestError::UnknownKind { doc: ctx.label, kind }.into());
        }
        let body: SpecBody =
            serde_yaml::from_value(Value::Mapping(spec.clone())).map_err(|e| ctx.err(e.to_string()))?;
        out.push(ScenarioSpec {
            name,
            injections: body.injections,
            baseline_ref: body.baseline.unwrap_or_else(|| BASELINE.into()),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Selector;

    fn sample() -> Vec<ScenarioResult> {
        let th = Thresholds::default();
        vec![
            ScenarioResult::from_latency("dead", None, 207_800, &th),
            ScenarioResult::from_latency("evict, large", Some(464_600), 207_800, &th),
            ScenarioResult::from_latency(BASELINE, Some(207_800), 207_800, &th),
        ]
    }

    #[test]
    fn csv_round_trip() {
        let text = write_csv(&sample());
        assert!(text.starts_with("strategy,latency_cycles,delta_pct,risk\n"));
        assert!(text.contains("dead,INFEASIBLE,,CERTAIN_FAILURE\n"));
        assert!(text.contains("\"evict, large\",464600,124,HIGH\n"));
        assert_eq!(read_csv(&text).unwrap(), sample());
    }

    #[test]
    fn empty_csv_is_header_only() {
        let text = write_csv(&[]);
        assert_eq!(text, "strategy,latency_cycles,delta_pct,risk\n");
        assert!(read_csv(&text).unwrap().is_empty());
        assert_eq!(render_table(&[], &Thresholds::default()).lines().count(), 2);
    }

    #[test]
    fn wrong_header_rejected() {
        assert!(matches!(read_csv("a,b\n1,2\n"), Err(ScenarioError::Csv(_))));
    }

    #[test]
    fn table_formats_latency() {
        let t = render_table(&sample(), &Thresholds::default());
        assert!(t.contains("464,600"));
        assert!(t.contains("+124%"));
        assert!(t.contains("INFEASIBLE"));
        assert!(t.lines().nth(4).unwrap().ends_with("not recommended"));
    }

    #[test]
    fn scenario_yaml() {
        let text = "apiVersion: rdsl/v0\nkind: scenario\nmetadata:\n  name: cfg\nspec:\n  injections:\n    - kind: EVICT_BUFFER\n      target: {function: CFG}\n    - kind: START_LAG\n      cycles: 100\n";
        let v = parse_scenario_docs(text).unwrap();
        assert_eq!(v[0].name, "cfg");
        assert_eq!(v[0].baseline_ref, BASELINE);
        assert_eq!(
            v[0].injections,
            vec![
                Injection::EvictBuffer {
                    target: Selector::Function("CFG".into())
                },
                Injection::StartLag { cycles: 100 }
            ]
        );
        let bad = text.replace("kind: scenario", "kind: topology");
        assert!(parse_scenario_docs(&bad).is_err());
    }
}
