use std::collections::HashSet;
use std::path::Path;

use super::Teacher;
use crate::corpus::{LabelKind, PairwiseSample};
use crate::error::{invalid, FwlError, Result};
use crate::scalar::Scalar;

/// Maps a posterior mean to a probability by clamping to `[0, 1]`.
pub fn soft_label<T: Scalar>(mean: T) -> T {
    mean.max(T::zero()).min(T::one())
}

/// Confidence score fed to the fidelity weight: the posterior variance itself.
pub fn uncertainty<T: Scalar>(var: T) -> Result<T> {
    if !(var >= T::zero()) {
        return Err(invalid(format!("variance must be non-negative, got {var}")));
    }
    Ok(var)
}

/// Relabels every distinct `(query, pos, neg)` triple with the teacher's soft
/// label and uncertainty. `represent` maps a sample into the teacher's input
/// space. First occurrence wins; order is preserved.
pub fn build_soft_dataset<T, M, F>(teacher: &M, mut represent: F, samples: &[PairwiseSample]) -> Result<Vec<PairwiseSample>>
where
    T: Scalar,
    M: Teacher<T> + ?Sized,
    F: FnMut(&PairwiseSample) -> Result<Vec<T>>,
{
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(samples.len());
    for s in samples {
        if !seen.insert(s.key()) {
            continue;
        }
        let (mean, var) = teacher.posterior(&represent(s)?)?;
        out.push(PairwiseSample::soft(
            s.query_id.clone(),
            s.pos_doc_id.clone(),
            s.neg_doc_id.clone(),
            soft_label(mean).f64(),
            uncertainty(var)?.f64(),
        )?);
    }
    Ok(out)
}

pub fn format_soft(samples: &[PairwiseSample]) -> String {
    samples
        .iter()
        .map(|s| format!("{}\t{}\t{}\t{}\t{}\n", s.query_id, s.pos_doc_id, s.neg_doc_id, s.label, s.sigma()))
        .collect()
}

pub fn parse_soft(text: &str) -> Result<Vec<PairwiseSample>> {
    let err = |line: usize, msg: String| FwlError::Parse { file: "soft".into(), line, msg };
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 5 {
            return Err(err(i + 1, format!("expected 5 tab-separated fields, found {}", f.len())));
        }
        let num = |s: &str, what: &str| s.trim().parse::<f64>().map_err(|e| err(i + 1, format!("bad {what} {s:?}: {e}")));
        let label = num(f[3], "soft label")?;
        let sigma = num(f[4], "sigma")?;
        let sample = PairwiseSample::new(f[0], f[1], f[2], label, LabelKind::Soft, Some(sigma))
            .map_err(|e| err(i + 1, e.to_string()))?;
        out.push(sample);
    }
    Ok(out)
}

pub fn write_soft(samples: &[PairwiseSample], path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, format_soft(samples))?;
    Ok(())
}

pub fn read_soft(path: impl AsRef<Path>) -> Result<Vec<PairwiseSample>> {
    parse_soft(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::teacher::{fit_clustered, gp_fit, KernelParams};

    #[test]
    fn label_and_uncertainty_maps() {
        assert_eq!(soft_label(0.73), 0.73);
        assert_eq!(soft_label(-0.2), 0.0);
        assert_eq!(soft_label(1.7), 1.0);
        assert_eq!(uncertainty(0.0).unwrap(), 0.0);
        assert_eq!(uncertainty(0.42).unwrap(), 0.42);
        assert!(uncertainty(-1e-3).is_err());
    }

    fn point(s: &PairwiseSample) -> Result<Vec<f64>> {
        let v = |id: &str| id[1..].parse::<f64>().unwrap();
        Ok(vec![v(&s.pos_doc_id), v(&s.neg_doc_id)])
    }

    #[test]
    fn strong_points_get_their_label_back_and_far_points_max_uncertainty() {
        let kp = KernelParams { signal_var: 1.0, length_scale: 1.0, noise_var: 0.0 };
        let strong = vec![PairwiseSample::strong("q", "d1", "d0"), PairwiseSample::strong("q", "d1", "d0").swapped()];
        let x: Vec<Vec<f64>> = strong.iter().map(|s| point(s).unwrap()).collect();
        let y: Vec<f64> = strong.iter().map(|s| s.label).collect();
        let teacher = fit_clustered(&x, &y, 1, &kp, 0).unwrap();
        let far = PairwiseSample::weak("q", "d40", "d50", 0.3).unwrap();
        let mut all = strong.clone();
        all.push(far);
        all.push(strong[0].clone());
        let soft = build_soft_dataset(&teacher, point, &all).unwrap();
        assert_eq!(soft.len(), 3);
        assert!((soft[0].label - 1.0).abs() < 1e-9);
        assert!(soft[0].sigma() <= 1e-10);
        assert!((soft[2].sigma() - 1.0).abs() < 1e-8);
        assert!(soft.iter().all(|s| s.kind == LabelKind::Soft));
    }

    #[test]
    fn plain_gp_is_a_teacher_too() {
        let kp = KernelParams::default();
        let gp = gp_fit(&[vec![0.0, 1.0]], &[0.6], &kp).unwrap();
        let soft = build_soft_dataset(&gp, point, &[PairwiseSample::strong("q", "d0", "d1")]).unwrap();
        assert!((soft[0].label - 0.6).abs() < 1e-12);
    }

    #[test]
    fn tsv_round_trip() {
        let s = vec![
            PairwiseSample::soft("q1", "a", "b", 0.25, 0.5).unwrap(),
            PairwiseSample::soft("q2", "c", "d", 1.0, 0.0).unwrap(),
        ];
        assert_eq!(parse_soft(&format_soft(&s)).unwrap(), s);
        assert!(parse_soft("q\ta\tb\t0.5\n").is_err());
        assert!(parse_soft("q\ta\tb\t0.5\t-1\n").is_err());
    }
}
