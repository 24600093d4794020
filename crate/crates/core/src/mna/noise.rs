use super::{solve_nodes, Component, ComponentKind, Excitation, MnaError, Node, Result};

/// Output noise voltage PSD (V²/Hz) at `freq`: every noise current source is
/// injected on its own and its transimpedance to `output` is squared.
pub fn output_noise_psd(components: &[Component], node_count: usize, output: Node, freq: f64) -> Result<f64> {
    let mut total = 0.0;
    for c in components {
        if c.kind != ComponentKind::CurrentSource || c.value == 0.0 {
            continue;
        }
        let excitation = Excitation::Current { into: c.nodes.0, from: c.nodes.1 };
        let v = solve_nodes(components, node_count, excitation, freq)?;
        total += v[output].norm_sqr() * c.value;
    }
    Ok(total)
}

fn interp(psd: &[(f64, f64)], f: f64) -> f64 {
    let i = psd.partition_point(|&(fi, _)| fi <= f);
    if i == 0 {
        return psd[0].1;
    }
    if i >= psd.len() {
        return psd[psd.len() - 1].1;
    }
    let (f0, s0) = psd[i - 1];
    let (f1, s1) = psd[i];
    s0 + (s1 - s0) * (f - f0) / (f1 - f0)
}

/// RMS value of a PSD over `band`: the square root of its trapezoidal
/// integral in linear frequency. Band edges are interpolated linearly.
pub fn integrate_input_noise(psd: &[(f64, f64)], band: (f64, f64)) -> Result<f64> {
    let (f1, f2) = band;
    let out_of_band = MnaError::BandOutsidePsd { f1, f2 };
    if psd.len() < 2 || !(f1 < f2) {
        return Err(out_of_band);
    }
    let (lo, hi) = (psd[0].0, psd[psd.len() - 1].0);
    let slack = 1e-12 * hi.abs();
    if f1 < lo - slack || f2 > hi + slack {
        return Err(out_of_band);
    }
    let (f1, f2) = (f1.max(lo), f2.min(hi));

    let mut pts = Vec::with_capacity(psd.len() + 2);
    pts.push((f1, interp(psd, f1)));
    pts.extend(psd.iter().copied().filter(|&(f, _)| f > f1 && f < f2));
    pts.push((f2, interp(psd, f2)));
    let area: f64 = pts.windows(2).map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0)).sum();
    Ok(area.max(0.0).sqrt())
}
