use std::io::Write;

use super::ConvergenceTable;

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

/// Writes one row per sweep value; orbit columns are empty for failed rows.
pub fn write_convergence_csv<W: Write>(table: &ConvergenceTable, out: W) -> csv::Result<()> {
    let d = table.z_a.len();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["eps".to_string()];
    header.extend((1..=d).map(|i| format!("z{i}")));
    header.extend(
        [
            "residual",
            "verified_residual",
            "iterations",
            "events",
            "distance_to_manifold",
            "distance_to_za",
            "expansion_ratio",
            "kappa_changed",
            "error_code",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    w.write_record(&header)?;
    for r in &table.rows {
        let mut row = vec![format!("{:?}", r.eps)];
        match &r.orbit {
            Some(o) => {
                row.extend(o.z_eps.iter().map(|v| format!("{v:?}")));
                row.push(format!("{:?}", o.residual));
                row.push(format!("{:?}", o.verified_residual));
                row.push(o.iterations.to_string());
                row.push(o.events.to_string());
                row.push(opt(o.distance_to_manifold));
                row.push(opt(o.distance_to_za));
            }
            None => row.extend((0..d + 6).map(|_| String::new())),
        }
        row.push(opt(r.expansion_ratio));
        row.push(r.kappa_changed.to_string());
        row.push(r.error_code.clone().unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
