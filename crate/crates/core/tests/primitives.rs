mod common;

use common::{fixed, project, random_matrix, rng};
use msast::attention::{attention_backward, attention_forward};
use msast::numerics::gradcheck::{check_input_gradient, DEFAULT_EPS};
use msast::numerics::ops::{
    dilated_conv1d, dilated_conv1d_backward, dropout, linear, linear_backward, log_softmax_rows,
    matmul, matmul_backward, relu, relu_backward, softmax_rows, softmax_rows_backward,
    temporal_norm, temporal_norm_backward,
};
use msast::numerics::{ConvMode, ConvSpec, Matrix};
use proptest::prelude::*;

const TOL: f64 = 1e-4;

fn mode(causal: bool) -> ConvMode {
    if causal {
        ConvMode::Causal
    } else {
        ConvMode::Symmetric
    }
}

proptest! {
    #![proptest_config(fixed(100))]

    #[test]
    fn matmul_gradient(seed in any::<u64>(), m in 1usize..6, k in 1usize..6, n in 1usize..6) {
        let mut g = rng(seed);
        let (a, b, r) = (random_matrix(&mut g, m, k), random_matrix(&mut g, k, n), random_matrix(&mut g, m, n));
        let (da, db) = matmul_backward(&a, &b, &r);
        let ea = check_input_gradient(&a, &da, DEFAULT_EPS, |a| project(&matmul(a, &b).unwrap(), &r));
        let eb = check_input_gradient(&b, &db, DEFAULT_EPS, |b| project(&matmul(&a, b).unwrap(), &r));
        prop_assert!(ea <= TOL && eb <= TOL, "{ea} {eb}");
    }

    #[test]
    fn linear_gradient(seed in any::<u64>(), t in 1usize..8, cin in 1usize..6, cout in 1usize..6) {
        let mut g = rng(seed);
        let x = random_matrix(&mut g, t, cin);
        let w = random_matrix(&mut g, cin, cout);
        let b = random_matrix(&mut g, 1, cout);
        let r = random_matrix(&mut g, t, cout);
        let (dx, dw, db) = linear_backward(&x, &w, &r);
        let e = [
            check_input_gradient(&x, &dx, DEFAULT_EPS, |x| project(&linear(x, &w, &b).unwrap(), &r)),
            check_input_gradient(&w, &dw, DEFAULT_EPS, |w| project(&linear(&x, w, &b).unwrap(), &r)),
            check_input_gradient(&b, &db, DEFAULT_EPS, |b| project(&linear(&x, &w, b).unwrap(), &r)),
        ];
        prop_assert!(e.iter().all(|&e| e <= TOL), "{e:?}");
    }

    #[test]
    fn conv_gradient(
        seed in any::<u64>(),
        t in 1usize..14,
        cin in 1usize..4,
        cout in 1usize..4,
        kernel in prop::sample::select(vec![1usize, 3, 5]),
        dilation in 1usize..5,
        causal in any::<bool>(),
    ) {
        let mut g = rng(seed);
        let spec = ConvSpec { kernel_size: kernel, dilation, mode: mode(causal) };
        let x = random_matrix(&mut g, t, cin);
        let w = random_matrix(&mut g, kernel * cin, cout);
        let b = random_matrix(&mut g, 1, cout);
        let r = random_matrix(&mut g, t, cout);
        let (dx, dw, db) = dilated_conv1d_backward(&x, &w, &r, spec);
        let f = |x: &Matrix<f64>, w: &Matrix<f64>, b: &Matrix<f64>| project(&dilated_conv1d(x, w, b, spec).unwrap(), &r);
        let e = [
            check_input_gradient(&x, &dx, DEFAULT_EPS, |x| f(x, &w, &b)),
            check_input_gradient(&w, &dw, DEFAULT_EPS, |w| f(&x, w, &b)),
            check_input_gradient(&b, &db, DEFAULT_EPS, |b| f(&x, &w, b)),
        ];
        prop_assert!(e.iter().all(|&e| e <= TOL), "{e:?}");
    }

    #[test]
    fn softmax_gradient(seed in any::<u64>(), t in 1usize..6, c in 1usize..7) {
        let mut g = rng(seed);
        let x = random_matrix(&mut g, t, c).map(|v| 3.0 * v);
        let r = random_matrix(&mut g, t, c);
        let dx = softmax_rows_backward(&softmax_rows(&x), &r);
        let e = check_input_gradient(&x, &dx, DEFAULT_EPS, |x| project(&softmax_rows(x), &r));
        prop_assert!(e <= TOL, "{e}");
    }

    #[test]
    fn relu_gradient(seed in any::<u64>(), t in 1usize..6, c in 1usize..6) {
        let mut g = rng(seed);
        // Keep inputs away from the kink so the stencil stays on one side.
        let x = random_matrix(&mut g, t, c).map(|v| if v.abs() < 1e-2 { 0.5 } else { v });
        let r = random_matrix(&mut g, t, c);
        let dx = relu_backward(&x, &r);
        let e = check_input_gradient(&x, &dx, DEFAULT_EPS, |x| project(&relu(x), &r));
        prop_assert!(e <= TOL, "{e}");
    }

    #[test]
    fn temporal_norm_gradient(seed in any::<u64>(), t in 2usize..10, c in 1usize..5) {
        let mut g = rng(seed);
        let x = random_matrix(&mut g, t, c);
        let gain = random_matrix(&mut g, 1, c);
        let bias = random_matrix(&mut g, 1, c);
        let r = random_matrix(&mut g, t, c);
        let (_, cache) = temporal_norm(&x, &gain, &bias).unwrap();
        let (dx, dgain, dbias) = temporal_norm_backward(&cache, &gain, &r);
        let f = |x: &Matrix<f64>, gn: &Matrix<f64>, bs: &Matrix<f64>| project(&temporal_norm(x, gn, bs).unwrap().0, &r);
        let e = [
            check_input_gradient(&x, &dx, DEFAULT_EPS, |x| f(x, &gain, &bias)),
            check_input_gradient(&gain, &dgain, DEFAULT_EPS, |gn| f(&x, gn, &bias)),
            check_input_gradient(&bias, &dbias, DEFAULT_EPS, |bs| f(&x, &gain, bs)),
        ];
        prop_assert!(e.iter().all(|&e| e <= TOL), "{e:?}");
    }

    #[test]
    fn attention_gradient(
        seed in any::<u64>(),
        t in 1usize..12,
        c in 1usize..5,
        window in prop::sample::select(vec![1usize, 2, 5, 16]),
        causal in any::<bool>(),
    ) {
        let mut g = rng(seed);
        let q = random_matrix(&mut g, t, c);
        let k = random_matrix(&mut g, t, c);
        let v = random_matrix(&mut g, t, c);
        let r = random_matrix(&mut g, t, c);
        let (_, cache) = attention_forward(&q, &k, &v, window, causal).unwrap();
        let (dq, dk, dv) = attention_backward(&q, &k, &v, &cache, &r);
        let f = |q: &Matrix<f64>, k: &Matrix<f64>, v: &Matrix<f64>| {
            project(&attention_forward(q, k, v, window, causal).unwrap().0, &r)
        };
        let e = [
            check_input_gradient(&q, &dq, DEFAULT_EPS, |q| f(q, &k, &v)),
            check_input_gradient(&k, &dk, DEFAULT_EPS, |k| f(&q, k, &v)),
            check_input_gradient(&v, &dv, DEFAULT_EPS, |v| f(&q, &k, v)),
        ];
        prop_assert!(e.iter().all(|&e| e <= TOL), "{e:?}");
    }

    #[test]
    fn softmax_rows_are_distributions(seed in any::<u64>(), t in 1usize..6, c in 1usize..9, shift in -50.0f64..50.0) {
        let mut g = rng(seed);
        let x = random_matrix(&mut g, t, c).map(|v| 10.0 * v);
        let y = softmax_rows(&x);
        for r in 0..t {
            prop_assert!((y.row(r).iter().sum::<f64>() - 1.0).abs() <= 1e-6);
        }
        let shifted = softmax_rows(&x.map(|v| v + shift));
        prop_assert!(y.max_abs_diff(&shifted) <= 1e-6);
        let logs = log_softmax_rows(&x);
        prop_assert!(logs.max_abs_diff(&y.map(f64::ln)) <= 1e-9);
    }

    #[test]
    fn causal_conv_ignores_the_future(
        seed in any::<u64>(),
        len in 2usize..20,
        kernel in prop::sample::select(vec![3usize, 5, 17]),
        dilation in 1usize..9,
        cut in 0usize..19,
    ) {
        let mut g = rng(seed);
        let t = cut % (len - 1);
        let spec = ConvSpec { kernel_size: kernel, dilation, mode: ConvMode::Causal };
        let x = random_matrix(&mut g, len, 3);
        let w = random_matrix(&mut g, kernel * 3, 2);
        let b = random_matrix(&mut g, 1, 2);
        let mut zeroed = x.clone();
        for r in t + 1..len {
            zeroed.row_mut(r).fill(0.0);
        }
        let y = dilated_conv1d(&x, &w, &b, spec).unwrap();
        let yz = dilated_conv1d(&zeroed, &w, &b, spec).unwrap();
        prop_assert_eq!(y.slice_rows(0, t + 1), yz.slice_rows(0, t + 1));
    }

    #[test]
    fn dropout_identity_cases(seed in any::<u64>(), rate in 0.0f64..0.99) {
        let mut g = rng(seed);
        let x = random_matrix(&mut g, 4, 3);
        let (eval, mask) = dropout(&x, rate, &mut g, false).unwrap();
        prop_assert_eq!(&eval, &x);
        prop_assert!(mask.is_none());
        let (zero_rate, _) = dropout(&x, 0.0, &mut g, true).unwrap();
        prop_assert_eq!(&zero_rate, &x);
    }
}
