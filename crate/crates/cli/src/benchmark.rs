use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args as ClapArgs;
use photodepth::eval::{improvement_aggregate, rank_aggregate, MetricsRecord};
use photodepth::Error;

use crate::RunContext;

#[derive(ClapArgs, Debug)]
pub struct Args {
    /// One metrics file per method (`key=value` lines, one per dataset).
    /// The method name is the file stem.
    #[arg(required = true, num_args = 2..)]
    pub methods: Vec<PathBuf>,
    /// Method the improvement is measured against; defaults to the first file.
    #[arg(long)]
    pub baseline: Option<String>,
    /// Also write the table as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

struct Method {
    name: String,
    datasets: BTreeMap<String, MetricsRecord>,
}

fn load(path: &PathBuf) -> Result<Method> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut datasets = BTreeMap::new();
    for line in text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
    {
        let r = MetricsRecord::from_line(line).with_context(|| format!("in {}", path.display()))?;
        datasets.insert(r.id.clone(), r);
    }
    let name = path
        .file_stem()
        .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
    Ok(Method { name, datasets })
}

/// Flattens every dataset's metrics into one row per method.
fn table(methods: &[Method]) -> Result<(Vec<Vec<f64>>, Vec<bool>)> {
    let datasets: Vec<&String> = methods[0].datasets.keys().collect();
    let mut rows = vec![Vec::new(); methods.len()];
    let mut lower = Vec::new();
    for d in &datasets {
        for (row, m) in rows.iter_mut().zip(methods) {
            let r = m
                .datasets
                .get(*d)
                .ok_or_else(|| Error::Manifest(format!("method {} has no results for {d}", m.name)))?;
            row.extend(r.values().0);
        }
        lower.extend(methods[0].datasets[*d].values().1);
    }
    if methods.iter().any(|m| m.datasets.len() != datasets.len()) {
        return Err(Error::Manifest("methods report different dataset sets".into()).into());
    }
    Ok((rows, lower))
}

pub fn run(_ctx: &RunContext, args: Args) -> Result<()> {
    let methods = args.methods.iter().map(load).collect::<Result<Vec<_>>>()?;
    if methods[0].datasets.is_empty() {
        return Err(Error::Empty(format!("{} holds no metrics", methods[0].name)).into());
    }
    let (rows, lower) = table(&methods)?;
    let ranks = rank_aggregate(&rows, &lower)?;
    let base = match &args.baseline {
        Some(b) => methods
            .iter()
            .position(|m| &m.name == b)
            .ok_or_else(|| Error::InvalidInput(format!("baseline {b} is not among the methods")))?,
        None => 0,
    };
    let mut text = format!("{:<24} {:>10} {:>14}\n", "method", "rank", "improvement%");
    let mut csv = String::from("method,rank,improvement_pct\n");
    for (i, m) in methods.iter().enumerate() {
        let imp = improvement_aggregate(&rows[i], &rows[base], &lower)?;
        writeln!(text, "{:<24} {:>10.4} {:>14.4}", m.name, ranks[i], imp)?;
        writeln!(csv, "{},{},{}", m.name, ranks[i], imp)?;
    }
    print!("{text}");
    if let Some(p) = &args.csv {
        std::fs::write(p, csv).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}
