//! Latent-space algebra: the t(m) index map, style-code splitting/merging,
//! W+ averaging, tRGB replacement and cross-domain style mixing.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::config::LayerTable;
use crate::latent::{MixLevel, StyleCode, WPlusCode};
use crate::synthesis::styles_from_wplus;
use crate::weights::GeneratorWeights;

/// Maps a W+ mixing level to the 1-based canonical style index: the smallest
/// index whose W+ row is >= m, or `table.len() + 1` when no layer qualifies
/// (everything stays on the face side).
pub fn t_of_m(table: &LayerTable, m: MixLevel) -> usize {
    let m = m.get();
    table
        .entries()
        .iter()
        .find(|e| e.w_row >= m)
        .map(|e| e.index)
        .unwrap_or(table.len() + 1)
}

/// Elementwise mean of W+ codes. Accumulates in f64 so the result is
/// independent of summation order to well below 1e-6.
pub fn average_wplus(codes: &[WPlusCode]) -> Result<WPlusCode> {
    let first = codes
        .first()
        .ok_or_else(|| Error::Empty("average_wplus needs at least one code".into()))?;
    let (n, d) = (first.num_rows(), first.latent_dim());
    for (i, c) in codes.iter().enumerate() {
        if c.num_rows() != n || c.latent_dim() != d {
            return Err(Error::Shape(format!(
                "code {i} is {}x{}, expected {n}x{d}",
                c.num_rows(),
                c.latent_dim()
            )));
        }
    }
    let mut acc = vec![0.0f64; n * d];
    for c in codes {
        for (a, v) in acc.iter_mut().zip(c.rows.iter()) {
            *a += *v as f64;
        }
    }
    let k = codes.len() as f64;
    let rows = Array2::from_shape_vec(
        (n, d),
        acc.into_iter().map(|s| (s / k) as f32).collect(),
    )
    .unwrap();
    Ok(WPlusCode { rows })
}

/// tRGB replacement R: conv entries from `sf`, tRGB entries from `sc`.
pub fn replace_trgb(sf: &StyleCode, sc: &StyleCode) -> Result<StyleCode> {
    sf.same_table(sc)?;
    let entries = sf
        .entries
        .iter()
        .zip(&sc.entries)
        .map(|(f, c)| if f.is_trgb { c.clone() } else { f.clone() })
        .collect();
    Ok(StyleCode {
        entries,
        table: sf.table.clone(),
    })
}

/// Style mixing SM: entries with canonical index < t(m) from `sf`, the rest
/// from `sc`. An exact partition; no entry is blended.
pub fn style_mix(sf: &StyleCode, sc: &StyleCode, m: MixLevel) -> Result<StyleCode> {
    sf.same_table(sc)?;
    let m = MixLevel::for_num_ws(m.get(), sf.table.num_ws())?;
    let t = t_of_m(&sf.table, m);
    let entries = sf
        .entries
        .iter()
        .zip(&sc.entries)
        .enumerate()
        .map(|(i, (f, c))| {
            let index = i + 1;
            if index < t {
                f.clone()
            } else {
                c.clone()
            }
        })
        .collect();
    Ok(StyleCode {
        entries,
        table: sf.table.clone(),
    })
}

/// Cross-domain style mixing: SM(R(A(wf), A(wc)), A(wc), m).
///
/// Every tRGB entry of the result equals the character's regardless of m.
pub fn cdsm(
    wf: &WPlusCode,
    wc: &WPlusCode,
    m: MixLevel,
    weights: &GeneratorWeights,
) -> Result<StyleCode> {
    let sf = styles_from_wplus(weights, wf)?;
    let sc = styles_from_wplus(weights, wc)?;
    let replaced = replace_trgb(&sf, &sc)?;
    style_mix(&replaced, &sc, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{GeneratorConfig, LayerKind};
    use crate::latent::StyleEntry;
    use crate::weights::init_weights;
    use ndarray::Array1;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn toy16() -> GeneratorWeights {
        let cfg = GeneratorConfig {
            output_resolution: 16,
            ..GeneratorConfig::default()
        };
        init_weights(&cfg, 42).unwrap()
    }

    fn random_style(table: &LayerTable, seed: u64) -> StyleCode {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        StyleCode {
            entries: table
                .entries()
                .iter()
                .map(|e| StyleEntry {
                    values: Array1::from_vec(
                        (0..e.style_width)
                            .map(|_| StandardNormal.sample(&mut rng))
                            .collect(),
                    ),
                    is_trgb: e.kind == LayerKind::TRgb,
                })
                .collect(),
            table: table.clone(),
        }
    }

    fn random_wplus(w: &GeneratorWeights, seed: u64) -> WPlusCode {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let (n, d) = (w.config.num_ws(), w.config.latent_dim);
        let data: Vec<f32> = (0..n * d).map(|_| StandardNormal.sample(&mut rng)).collect();
        WPlusCode {
            rows: Array2::from_shape_vec((n, d), data).unwrap(),
        }
    }

    #[test]
    fn t_of_m_on_toy_table() {
        let w = toy16();
        let t = |m: usize| t_of_m(&w.table, MixLevel::new(m, &w.config).unwrap());
        assert_eq!(t(0), 1);
        assert_eq!(t(2), 4); // conv1_8 is the first layer with row >= 2
        assert_eq!(t(6), 9); // L + 1: no row >= 6 at this scale
    }

    #[test]
    fn t_of_m_on_full_scale_table() {
        let cfg = GeneratorConfig {
            output_resolution: 1024,
            ..GeneratorConfig::default()
        };
        let table = LayerTable::build(&cfg).unwrap();
        let m = MixLevel::for_num_ws(6, table.num_ws()).unwrap();
        let t = t_of_m(&table, m);
        assert_eq!(t, 10);
        assert_eq!(table.entry(10).name, "conv1_32");
    }

    #[test]
    fn t_of_m_is_monotone() {
        let w = toy16();
        let mut prev = 0usize;
        for m in 0..=w.config.num_ws() {
            let t = t_of_m(&w.table, MixLevel::new(m, &w.config).unwrap());
            assert!(t >= prev);
            prev = t;
        }
    }

    #[test]
    fn mix_level_validation() {
        let w = toy16();
        assert!(MixLevel::new(6, &w.config).is_ok());
        assert!(MixLevel::new(7, &w.config).is_err());
    }

    #[test]
    fn average_single_code_is_identity() {
        let w = toy16();
        let a = random_wplus(&w, 1);
        let avg = average_wplus(std::slice::from_ref(&a)).unwrap();
        assert_eq!(avg, a);
    }

    #[test]
    fn average_of_opposites_is_zero() {
        let w = toy16();
        let a = random_wplus(&w, 2);
        let b = WPlusCode {
            rows: a.rows.mapv(|v| -v),
        };
        let avg = average_wplus(&[a, b]).unwrap();
        assert!(avg.rows.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn average_matches_two_pass_oracle() {
        let w = toy16();
        let codes: Vec<WPlusCode> = (0..50).map(|s| random_wplus(&w, 100 + s)).collect();
        let avg = average_wplus(&codes).unwrap();
        // independent second summation: per-entry f64 sums in reverse order
        let (n, d) = (codes[0].num_rows(), codes[0].latent_dim());
        for r in 0..n {
            for c in 0..d {
                let mut acc = 0.0f64;
                for code in codes.iter().rev() {
                    acc += code.rows[[r, c]] as f64;
                }
                let expect = (acc / codes.len() as f64) as f32;
                let got = avg.rows[[r, c]];
                assert!(
                    (expect - got).abs() <= 1e-6 * (1.0 + expect.abs()),
                    "entry ({r},{c}): {got} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn average_rejects_bad_input() {
        assert!(average_wplus(&[]).is_err());
        let w = toy16();
        let a = random_wplus(&w, 3);
        let b = WPlusCode {
            rows: Array2::zeros((2, 2)),
        };
        assert!(average_wplus(&[a, b]).is_err());
    }

    #[test]
    fn replace_trgb_laws() {
        let w = toy16();
        let s = random_style(&w.table, 4);
        let idem = replace_trgb(&s, &s).unwrap();
        assert!(idem.bits_eq(&s));

        let sf = random_style(&w.table, 5);
        let sc = random_style(&w.table, 6);
        let r = replace_trgb(&sf, &sc).unwrap();
        let rr = replace_trgb(&r, &sc).unwrap();
        assert!(rr.bits_eq(&r));

        // exactly the 3 tRGB entries of the 16x16 table change
        let changed = r
            .entries
            .iter()
            .zip(&sf.entries)
            .filter(|(a, b)| !a.values.iter().zip(b.values.iter()).all(|(x, y)| x == y))
            .count();
        assert_eq!(changed, 3);
        assert_eq!(w.table.trgb_count(), 3);
    }

    #[test]
    fn style_mix_laws() {
        let w = toy16();
        let s = random_style(&w.table, 7);
        for m in 0..=w.config.num_ws() {
            let ml = MixLevel::new(m, &w.config).unwrap();
            let mixed = style_mix(&s, &s, ml).unwrap();
            assert!(mixed.bits_eq(&s));
        }

        let sf = random_style(&w.table, 8);
        let sc = random_style(&w.table, 9);
        let m0 = style_mix(&sf, &sc, MixLevel::new(0, &w.config).unwrap()).unwrap();
        assert!(m0.bits_eq(&sc));
        let mtop = style_mix(&sf, &sc, MixLevel::new(6, &w.config).unwrap()).unwrap();
        // at toy scale t(num_ws) = L + 1, so everything comes from sf
        assert!(mtop.bits_eq(&sf));
    }

    #[test]
    fn cdsm_degenerate_cases() {
        let w = toy16();
        let wf = random_wplus(&w, 10);
        let wc = random_wplus(&w, 11);
        let ac = styles_from_wplus(&w, &wc).unwrap();

        let same = cdsm(&wc, &wc, MixLevel::new(3, &w.config).unwrap(), &w).unwrap();
        assert!(same.bits_eq(&ac));

        let m0 = cdsm(&wf, &wc, MixLevel::new(0, &w.config).unwrap(), &w).unwrap();
        assert!(m0.bits_eq(&ac));
    }

    #[test]
    fn cdsm_matches_assembly_oracle() {
        // Independent oracle: assemble the expected code straight from the
        // set definitions (tRGB always from the character; below t(m) conv
        // entries from the face; at/above t(m) everything from the character).
        let w = toy16();
        let wf = random_wplus(&w, 12);
        let wc = random_wplus(&w, 13);
        let m = MixLevel::new(2, &w.config).unwrap();
        let got = cdsm(&wf, &wc, m, &w).unwrap();

        let sf = styles_from_wplus(&w, &wf).unwrap();
        let sc = styles_from_wplus(&w, &wc).unwrap();
        let t = t_of_m(&w.table, m);
        for (i, entry) in w.table.entries().iter().enumerate() {
            let expect = if entry.kind == LayerKind::TRgb || entry.index >= t {
                &sc.entries[i]
            } else {
                &sf.entries[i]
            };
            assert!(
                got.entries[i]
                    .values
                    .iter()
                    .zip(expect.values.iter())
                    .all(|(a, b)| a.to_bits() == b.to_bits()),
                "mismatch at {}",
                entry.name
            );
        }
    }

    #[test]
    fn cdsm_trgb_totality_for_every_m() {
        let w = toy16();
        let wf = random_wplus(&w, 14);
        let wc = random_wplus(&w, 15);
        let ac = styles_from_wplus(&w, &wc).unwrap();
        for m in 0..=w.config.num_ws() {
            let out = cdsm(&wf, &wc, MixLevel::new(m, &w.config).unwrap(), &w).unwrap();
            for (i, e) in out.entries.iter().enumerate() {
                if e.is_trgb {
                    assert!(e
                        .values
                        .iter()
                        .zip(ac.entries[i].values.iter())
                        .all(|(a, b)| a.to_bits() == b.to_bits()));
                }
            }
        }
    }

    #[test]
    fn sm_r_commute_at_the_output() {
        let w = toy16();
        for seed in 0..20 {
            let sf = random_style(&w.table, 200 + seed);
            let sc = random_style(&w.table, 300 + seed);
            for m in 0..=w.config.num_ws() {
                let ml = MixLevel::new(m, &w.config).unwrap();
                let r_first = style_mix(&replace_trgb(&sf, &sc).unwrap(), &sc, ml).unwrap();
                let sm_first = replace_trgb(&style_mix(&sf, &sc, ml).unwrap(), &sc).unwrap();
                assert!(r_first.bits_eq(&sm_first));
            }
        }
    }
}
