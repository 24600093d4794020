use rand::Rng;

use crate::env::Action;

/// Log-softmax of one head's three logits.
pub fn log_softmax3(z: &[f64]) -> [f64; 3] {
    let m = z[0].max(z[1]).max(z[2]);
    let lse = m + ((z[0] - m).exp() + (z[1] - m).exp() + (z[2] - m).exp()).ln();
    [z[0] - lse, z[1] - lse, z[2] - lse]
}

pub fn softmax3(z: &[f64]) -> [f64; 3] {
    log_softmax3(z).map(f64::exp)
}

/// Per-head probabilities, head-major.
pub fn head_probs(logits: &[f64]) -> Vec<[f64; 3]> {
    logits.chunks_exact(3).map(softmax3).collect()
}

fn head_entropy(lp: &[f64; 3]) -> f64 {
    -lp.iter().map(|l| l.exp() * l).sum::<f64>()
}

/// Joint log-probability of `action` (sum over heads).
pub fn log_prob(logits: &[f64], action: &Action) -> f64 {
    logits.chunks_exact(3).zip(action.classes()).map(|(z, c)| log_softmax3(z)[c]).sum()
}

/// Sum of per-head entropies.
pub fn entropy(logits: &[f64]) -> f64 {
    logits.chunks_exact(3).map(|z| head_entropy(&log_softmax3(z))).sum()
}

/// Independent categorical draw per head; returns the action, its joint
/// log-probability, and the joint entropy.
pub fn sample_action(logits: &[f64], rng: &mut impl Rng) -> (Action, f64, f64) {
    let mut classes = Vec::with_capacity(logits.len() / 3);
    let (mut lp, mut ent) = (0.0, 0.0);
    for z in logits.chunks_exact(3) {
        let l = log_softmax3(z);
        let u: f64 = rng.gen();
        let p0 = l[0].exp();
        let p1 = l[1].exp();
        let c = if u < p0 {
            0
        } else if u < p0 + p1 {
            1
        } else {
            2
        };
        classes.push(c);
        lp += l[c];
        ent += head_entropy(&l);
    }
    (Action::from_classes(&classes), lp, ent)
}

/// Most likely class per head; ties go to the lower class index.
pub fn greedy_action(logits: &[f64]) -> Action {
    let classes: Vec<usize> = logits
        .chunks_exact(3)
        .map(|z| {
            let mut best = 0;
            for c in 1..3 {
                if z[c] > z[best] {
                    best = c;
                }
            }
            best
        })
        .collect();
    Action::from_classes(&classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_heads() {
        let z = vec![0.0; 21];
        assert!(head_probs(&z).iter().all(|p| p.iter().all(|&q| (q - 1.0 / 3.0).abs() < 1e-15)));
        assert!((entropy(&z) - 7.0 * 3f64.ln()).abs() < 1e-12);
        let (_, _, e) = sample_action(&z, &mut ChaCha8Rng::seed_from_u64(0));
        assert!((e - 7.0 * 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn shift_invariance() {
        let a = softmax3(&[0.3, -1.2, 2.0]);
        let b = softmax3(&[100.3, 98.8, 102.0]);
        for i in 0..3 {
            assert!((a[i] - b[i]).abs() < 1e-12);
        }
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn saturated_head_decrements() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let (a, _, _) = sample_action(&[10.0, -10.0, -10.0], &mut rng);
            assert_eq!(a.0, vec![-1]);
        }
        assert_eq!(greedy_action(&[10.0, -10.0, -10.0, 0.0, 0.5, 0.2]).0, vec![-1, 0]);
    }

    #[test]
    fn empirical_frequencies_match_softmax() {
        let z = [0.4, -0.3, 1.1, -2.0, 0.0, 0.5];
        let p = head_probs(&z);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let mut counts = [[0usize; 3]; 2];
        for _ in 0..n {
            let (a, lp, _) = sample_action(&z, &mut rng);
            assert!((lp - log_prob(&z, &a)).abs() < 1e-12);
            for (h, c) in a.classes().into_iter().enumerate() {
                counts[h][c] += 1;
            }
        }
        for h in 0..2 {
            for c in 0..3 {
                let f = counts[h][c] as f64 / n as f64;
                assert!((f - p[h][c]).abs() < 0.01, "head {h} class {c}: {f} vs {}", p[h][c]);
            }
        }
    }
}
