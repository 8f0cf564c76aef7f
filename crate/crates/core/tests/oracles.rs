//! Independent reference computations for the numerical core.

use solar::analysis::{subspace_similarity, tail_energy};
use solar::basis::{generate_pool, BasisMatrix, BasisMode, BasisPoolSpec, PoolTag, RngStream};
use solar::linalg::{svd_full, DenseMatrix};
use solar::pipeline::{
    compress_with_svd, fit_coefficients, project, reconstruct, refit_on_support, relative_error, svd_truncate,
    AdapterPair, CompressConfig,
};

fn gaussian(rows: usize, cols: usize, rng: &mut RngStream) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.next_gaussian())
}

fn basis(matrix: DenseMatrix, index: usize) -> BasisMatrix {
    BasisMatrix {
        tag: PoolTag::A,
        index,
        indices: vec![],
        matrix,
    }
}

fn det3(m: [[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

#[test]
fn three_basis_normal_equations_by_cramer() {
    let mut rng = RngStream::from_sub_seed(31);
    let pool: Vec<BasisMatrix> = (0..3).map(|i| basis(gaussian(2, 2, &mut rng), i)).collect();
    let target = gaussian(2, 2, &mut rng);

    let ip = |x: &DenseMatrix, y: &DenseMatrix| x.data().iter().zip(y.data()).map(|(a, b)| a * b).sum::<f64>();
    let mut g = [[0.0; 3]; 3];
    let mut rhs = [0.0; 3];
    for i in 0..3 {
        for j in 0..3 {
            g[i][j] = ip(&pool[i].matrix, &pool[j].matrix);
        }
        rhs[i] = ip(&pool[i].matrix, &target);
    }
    let d = det3(g);
    let expected: Vec<f64> = (0..3)
        .map(|c| {
            let mut m = g;
            for row in 0..3 {
                m[row][c] = rhs[row];
            }
            det3(m) / d
        })
        .collect();

    let got = fit_coefficients(&pool, &target, 0.0).unwrap();
    for (a, b) in got.solution.iter().zip(&expected) {
        assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
    }
}

#[test]
fn nested_support_refit_never_increases_residual() {
    let mut rng = RngStream::from_sub_seed(32);
    let pool: Vec<BasisMatrix> = (0..8).map(|i| basis(gaussian(3, 4, &mut rng), i)).collect();
    let target = gaussian(3, 4, &mut rng);
    let residual = |support: Vec<usize>| {
        let c = refit_on_support(&pool, &target, &support, 0.0).unwrap();
        solar::pipeline::fit_residual(&pool, &target, &c).unwrap()
    };
    let r2 = residual(vec![1, 6]);
    let r4 = residual(vec![1, 3, 5, 6]);
    assert!(r4 <= r2 + 1e-12, "{r4} > {r2}");
    assert!((residual(vec![]) - target.frobenius_norm()).abs() < 1e-15);
}

#[test]
fn projection_round_trip() {
    let mut rng = RngStream::from_sub_seed(33);
    let w = gaussian(8, 8, &mut rng);
    let svd = svd_full(&w).unwrap();
    let adapter = AdapterPair::new(gaussian(2, 8, &mut rng), gaussian(8, 2, &mut rng)).unwrap();
    let p = project(&svd, &adapter).unwrap();
    let ut = svd.u.transpose();
    // U B_proj A_proj V^T
    let back = svd.u.matmul(&p.b_proj).unwrap().matmul(&p.a_proj).unwrap().matmul(&svd.v.transpose()).unwrap();
    assert!(relative_error(&back, &adapter.delta()).unwrap() <= 1e-10);
    assert!(relative_error(&ut.matmul(adapter.b()).unwrap(), &p.b_proj).unwrap() <= 1e-14);
}

#[test]
fn eckart_young_residual_is_the_tail() {
    let mut rng = RngStream::from_sub_seed(34);
    let dw = gaussian(12, 9, &mut rng);
    let sigma = svd_full(&dw).unwrap().sigma;
    for rank in 0..=9 {
        let t = svd_truncate(&dw, rank).unwrap();
        let direct = dw.sub(&t.adapter.delta()).unwrap().frobenius_norm();
        assert!((direct - tail_energy(&sigma, rank)).abs() <= 1e-10);
    }
}

#[test]
fn receiver_regenerates_pool_b_from_seed() {
    // rebuild B by hand from a freshly generated pool
    let mut rng = RngStream::from_sub_seed(35);
    let w = gaussian(10, 10, &mut rng);
    let svd = svd_full(&w).unwrap();
    let adapter = AdapterPair::new(gaussian(2, 10, &mut rng), gaussian(10, 2, &mut rng)).unwrap();
    let config = CompressConfig {
        seed: 99,
        noise_sigma: 0.5,
        ..CompressConfig::new(60, 60, 30, 30)
    };
    let out = compress_with_svd(&svd, &adapter, &config).unwrap();
    let spec = BasisPoolSpec {
        master_seed: 99,
        tag: PoolTag::B,
        count: 60,
        slice_width: 2,
        ambient: 10,
        noise_sigma: 0.5,
        mode: BasisMode::Aligned,
    };
    let pool = generate_pool(&spec, &svd).unwrap();
    let beta = &out.artifact.beta.coefficients;
    let mut b_proj = DenseMatrix::zeros(10, 2);
    for (&i, &c) in beta.support.iter().zip(&beta.values) {
        b_proj = b_proj.add(&pool[i].matrix.scaled(c)).unwrap();
    }
    let manual_b = svd.u.matmul(&b_proj).unwrap();
    let back = reconstruct(&svd, &out.artifact).unwrap();
    assert!(relative_error(back.b(), &manual_b).unwrap() <= 1e-12);
}

#[test]
fn similarity_of_a_weight_with_itself_counts_directions() {
    let mut rng = RngStream::from_sub_seed(36);
    let w = gaussian(20, 20, &mut rng);
    for i in 1..=16 {
        let phi = subspace_similarity(&w, &w, i, i).unwrap();
        assert!((phi - i as f64).abs() <= 1e-9);
    }
}
