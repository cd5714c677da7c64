use finsler_lab::geom::{vec2, SymQuadratic, Vector};
use finsler_lab::grid::{consistency_probe, continuum_m, DataFn, CONSISTENCY_KAPPA};
use finsler_lab::norm::{FinslerNorm, NormSpec};
use finsler_lab::operators::envelope_pair;
use rand::{Rng, SeedableRng};

fn main() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
    let norms = [
        FinslerNorm::build(&NormSpec::l1(2), 2).unwrap(),
        FinslerNorm::build(&NormSpec::linf(2), 2).unwrap(),
    ];
    for trial in 0..40 {
        let p = vec2(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        if p.norm2() < 0.2 { continue; }
        let x_form = SymQuadratic::new(&[
            vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)],
            vec![0.0, rng.gen_range(-2.0..2.0)],
        ]);
        for (ni, norm) in norms.iter().enumerate() {
            let (hi, lo) = envelope_pair(norm, 0.0, &p, &x_form).unwrap();
            let probe = DataFn::Quadratic { x_form, p };
            let rep = consistency_probe(norm, &probe, &vec2(0.0,0.0), &[0.02, 0.01], CONSISTENCY_KAPPA).unwrap();
            let predicted = -0.25*(hi+lo);
            if (rep.extrapolated - predicted).abs() > 1e-6 {
                println!("trial {trial} norm {ni}: extrap {} predicted {} rows {:?}", rep.extrapolated, predicted, rep.rows.iter().map(|r| r.value).collect::<Vec<_>>());
                // brute force M at eps=0.01
                let eps = 0.01;
                let value = |x: &Vector| probe.eval(norm, x);
                // dense brute force over ball
                let mut sup = f64::NEG_INFINITY; let mut inf = f64::INFINITY;
                let n = 4000;
                for a in 0..n {
                    let t = 2.0*std::f64::consts::PI*(a as f64)/(n as f64);
                    let u = vec2(t.cos(), t.sin());
                    let b = u.scale(1.0/norm.eval(&u));
                    for rr in [0.0_f64, 0.2,0.4,0.6,0.8,0.9,0.95,1.0] {
                        let y = b.scale(rr*eps);
                        sup = sup.max(value(&(y)));
                        inf = inf.min(value(&(Vector::zeros(2) - y)));
                    }
                }
                let m_brute = 0.5*(sup+inf);
                let v_brute = (value(&vec2(0.0,0.0)) - m_brute)/(eps*eps);
                let m_mine = continuum_m(norm, &value, Some((&x_form, &p)), &vec2(0.0,0.0), eps);
                let v_mine = (value(&vec2(0.0,0.0)) - m_mine)/(eps*eps);
                println!("  eps={eps}: v_brute {v_brute} v_mine {v_mine}  bracket=({},{})", -0.5*hi, -0.5*lo);
                return;
            }
        }
    }
    println!("all consistent");
}
