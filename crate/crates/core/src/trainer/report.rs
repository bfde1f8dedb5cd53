use super::eval::EvalResult;
use crate::metrics::ClassScores;

/// Mean of several results: per class over the results that score the
/// class, overall as the mean of the per-result means.
pub fn average(results: &[&EvalResult]) -> Option<(ClassScores, ClassScores)> {
    if results.is_empty() {
        return None;
    }
    let classes = results[0].c_acc.per_class.len();
    let avg = |pick: fn(&EvalResult) -> &ClassScores| {
        let per_class = (0..classes)
            .map(|c| {
                let vals: Vec<f64> = results.iter().filter_map(|r| pick(r).per_class.get(c).copied().flatten()).collect();
                (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
            })
            .collect();
        let mean = results.iter().map(|r| pick(r).mean).sum::<f64>() / results.len() as f64;
        ClassScores { mean, per_class }
    };
    Some((avg(|r| &r.c_acc), avg(|r| &r.m_iou)))
}

fn cell(acc: Option<f64>, iou: Option<f64>) -> String {
    let f = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
    format!("{}/{}", f(acc), f(iou))
}

/// One column per method, cells `c_acc/m_iou`, `Average` row first, then
/// one row per class.
pub fn method_table_csv(class_names: &[String], columns: &[(String, Vec<&EvalResult>)]) -> String {
    let mut out = String::from("class");
    let mut avgs = Vec::new();
    for (name, results) in columns {
        out.push(',');
        out.push_str(name);
        avgs.push(average(results));
    }
    out.push('\n');
    out.push_str("Average");
    for a in &avgs {
        out.push(',');
        if let Some((acc, iou)) = a {
            out.push_str(&cell(Some(acc.mean), Some(iou.mean)));
        }
    }
    out.push('\n');
    for (c, name) in class_names.iter().enumerate() {
        out.push_str(name);
        for a in &avgs {
            out.push(',');
            if let Some((acc, iou)) = a {
                out.push_str(&cell(acc.per_class[c], iou.per_class[c]));
            }
        }
        out.push('\n');
    }
    out
}
