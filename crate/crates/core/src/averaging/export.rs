use std::io::Write;

use super::AveragedSamples;

/// Writes `alpha1..ak,f1_1..f1_k,h,h2,h3,pass` rows in grid order. `f1`
/// cells are empty where the orbit could not be integrated.
pub fn write_samples_csv<W: Write>(samples: &AveragedSamples, out: W) -> csv::Result<()> {
    let k = samples.k;
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (1..=k).map(|i| format!("alpha{i}")).collect();
    header.extend((1..=k).map(|i| format!("f1_{i}")));
    header.extend(["h", "h2", "h3", "pass"].iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for r in &samples.reports {
        let mut row: Vec<String> = r.alpha.iter().map(|v| format!("{v:?}")).collect();
        match &r.f1 {
            Some(f) => row.extend(f.iter().map(|v| format!("{v:?}"))),
            None => row.extend((0..k).map(|_| String::new())),
        }
        row.push(r.h.pass.to_string());
        row.push(r.h2.as_ref().map(|c| c.pass.to_string()).unwrap_or_default());
        row.push(r.h3.as_ref().map(|c| c.pass.to_string()).unwrap_or_default());
        row.push(r.pass.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
