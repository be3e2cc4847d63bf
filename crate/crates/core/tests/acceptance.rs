//! Acceptance suite: one test per criterion, each printing a PASS line
//! with the measured quantity (run with `--nocapture` to see them all).
//!
//! Criteria 5, 6, 9 and 10 are wall-clock heavy; they serialize on a
//! shared lock so their runtime budgets are not disturbed by one another.

use std::sync::Mutex;
use std::time::Instant;

use nalgebra::Vector3;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use shapefilter::explicit::{
    ExplicitFilter, ExplicitFilterConfig, KernelFamily, KernelSpec, MatrixMode,
};
use shapefilter::fem::ElasticityParams;
use shapefilter::field::NodalField;
use shapefilter::fixtures;
use shapefilter::implicit::{
    build_bulk_surface_operator, build_surface_operator, helmholtz_radius_for_span,
};
use shapefilter::optimize::{
    run_optimization, FilterChoice, OptimizationConfig, ResponseKind, SequentialSurfaceFilter,
    StepSize, TerminationReason,
};
use shapefilter::response::{
    strain_energy_response, synthetic_uniform_sensitivity, synthetic_uniform_sensitivity_volume,
    volume_response, PointLoad,
};
use shapefilter::sparse::dense_condition_general;

static HEAVY: Mutex<()> = Mutex::new(());

const PLATE_CELLS: usize = 40;
const PLATE_JITTER: f64 = 0.15;
const PLATE_SEED: u64 = 42;

fn plate40() -> shapefilter::mesh::SurfaceMesh {
    fixtures::plate(PLATE_CELLS, PLATE_JITTER, PLATE_SEED).unwrap()
}

fn explicit_config(family: KernelFamily, span: f64) -> ExplicitFilterConfig {
    ExplicitFilterConfig {
        kernel: KernelSpec::with_span(family, span).unwrap(),
        damping: false,
        normalization: true,
        matrix_mode: MatrixMode::Stored,
    }
}

fn random_field(n: usize, rng: &mut ChaCha8Rng) -> NodalField {
    NodalField::from_flat((0..3 * n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn assert_runtime(criterion: usize, start: Instant, budget_s: f64) {
    let elapsed = start.elapsed().as_secs_f64();
    assert!(
        elapsed < budget_s,
        "criterion {criterion} exceeded its runtime budget: {elapsed:.1}s > {budget_s}s"
    );
}

#[test]
fn criterion_01_explicit_forward_consistency() {
    let start = Instant::now();
    let sm = fixtures::perforated_plate(3).unwrap();
    let span = 5.0 * sm.mean_edge_length();
    let mut worst_overall = 0.0f64;
    for family in [
        KernelFamily::Gaussian,
        KernelFamily::LinearHat,
        KernelFamily::GreenRegularized,
    ] {
        let filter = ExplicitFilter::build(explicit_config(family, span), &sm).unwrap();
        let worst = filter
            .matrix()
            .unwrap()
            .row_sums()
            .iter()
            .fold(0.0f64, |m, s| m.max((s - 1.0).abs()));
        assert!(worst < 1e-12, "{family:?}: max |A 1 - 1| = {worst:e}");
        worst_overall = worst_overall.max(worst);
    }
    assert_runtime(1, start, 5.0);
    println!(
        "PASS criterion 1: explicit forward consistency, max |A·1 - 1| = {worst_overall:.2e} < 1e-12"
    );
}

#[test]
fn criterion_02_explicit_transpose_inconsistency() {
    let start = Instant::now();
    let sm = fixtures::perforated_plate(3).unwrap();
    let span = 5.0 * sm.mean_edge_length();
    let filter =
        ExplicitFilter::build(explicit_config(KernelFamily::LinearHat, span), &sm).unwrap();
    let djdx = synthetic_uniform_sensitivity(&sm, Vector3::new(0.0, 0.0, 1.0)).unwrap();
    let djds = filter.scaled_transpose_apply(&djdx).unwrap();
    let mut boundary = vec![false; sm.n_nodes()];
    for e in sm.boundary_edges() {
        boundary[e[0]] = true;
        boundary[e[1]] = true;
    }
    let worst = (0..sm.n_nodes())
        .filter(|&i| boundary[i])
        .map(|i| (djds.node(i).z - 1.0).abs())
        .fold(0.0f64, f64::max);
    assert!(worst > 0.01, "boundary deviation {worst} not > 1%");
    assert_runtime(2, start, 5.0);
    println!(
        "PASS criterion 2: explicit transpose inconsistency, boundary deviation {:.1}% > 1%",
        100.0 * worst
    );
}

#[test]
fn criterion_03_implicit_rigid_body_consistency() {
    let start = Instant::now();
    let mut worst = 0.0f64;

    // Surface filter on a structured and an unstructured fixture.
    for sm in [
        fixtures::plate(20, 0.0, 0).unwrap(),
        fixtures::perforated_plate(3).unwrap(),
    ] {
        let op = build_surface_operator(&sm, 1.5 * sm.mean_edge_length()).unwrap();
        let djdx = synthetic_uniform_sensitivity(&sm, Vector3::new(0.0, 0.0, 1.0)).unwrap();
        let (_, scaled) = op.map_sensitivities(&djdx).unwrap();
        for i in 0..sm.n_nodes() {
            worst = worst
                .max((scaled.node(i).z - 1.0).abs())
                .max(scaled.node(i).x.abs())
                .max(scaled.node(i).y.abs());
        }
    }

    // Bulk-surface filter on a structured block and the icosahedral ball.
    for vm in [
        fixtures::notched_block(4).unwrap(),
        fixtures::ball(2).unwrap(),
    ] {
        let mut vm = vm;
        vm.set_design_flags(vec![true; vm.n_nodes()]).unwrap();
        let ep = ElasticityParams::default();
        let op =
            build_bulk_surface_operator(&vm, &ep, 0.5 * vm.mean_edge_length(), 1.0, None).unwrap();
        let djdx = synthetic_uniform_sensitivity_volume(&vm, Vector3::new(0.0, 0.0, 1.0)).unwrap();
        let (_, scaled) = op.map_sensitivities(&djdx).unwrap();
        for i in 0..vm.n_nodes() {
            worst = worst
                .max((scaled.node(i).z - 1.0).abs())
                .max(scaled.node(i).x.abs())
                .max(scaled.node(i).y.abs());
        }
    }
    assert!(worst < 1e-8, "max deviation from uniform {worst:e}");
    assert_runtime(3, start, 10.0);
    println!("PASS criterion 3: implicit rigid-body consistency, max deviation {worst:.2e} < 1e-8");
}

#[test]
fn criterion_04_kernel_equivalence() {
    let start = Instant::now();
    let sm = plate40();
    let a = sm.mean_edge_length();
    let span = 10.0 * a;
    let radius = 0.5 * span;

    let op = build_surface_operator(&sm, radius).unwrap();
    let (lo, hi) = sm.bounding_box();
    let center = nalgebra::center(&lo, &hi);
    let node = sm
        .nodes()
        .iter()
        .enumerate()
        .min_by(|(_, p), (_, q)| {
            (*p - center)
                .norm()
                .partial_cmp(&(*q - center).norm())
                .unwrap()
        })
        .map(|(i, _)| i)
        .unwrap();
    let numerical = op.numerical_kernel_row(node).unwrap();

    let green = KernelSpec::new(KernelFamily::GreenRegularized, radius).unwrap();
    let green_peak = green.eval(0.0);
    let center_pos = sm.nodes()[node];
    let mut sq_sum = 0.0;
    let mut count = 0usize;
    for (i, p) in sm.nodes().iter().enumerate() {
        let d = (p - center_pos).norm();
        if d <= 0.5 * span {
            let g = green.eval(d) / green_peak;
            sq_sum += (numerical[i] - g).powi(2);
            count += 1;
        }
    }
    let rms = (sq_sum / count as f64).sqrt();
    assert!(rms < 0.10, "normalized RMS difference {rms}");
    assert_runtime(4, start, 30.0);
    println!(
        "PASS criterion 4: regularized Green vs numerical Helmholtz kernel, RMS {rms:.4} < 0.10 \
         ({count} sample nodes)"
    );
}

#[test]
fn criterion_05_conditioning_ordering() {
    let _guard = HEAVY.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let sm = plate40();
    let a = sm.mean_edge_length();
    let ratios = [5.0, 10.0, 20.0];

    let mut cond_gauss = Vec::new();
    let mut cond_linear = Vec::new();
    let mut cond_implicit = Vec::new();
    for &ratio in &ratios {
        let span = ratio * a;
        for (family, out) in [
            (KernelFamily::Gaussian, &mut cond_gauss),
            (KernelFamily::LinearHat, &mut cond_linear),
        ] {
            let filter = ExplicitFilter::build(explicit_config(family, span), &sm).unwrap();
            let dense = filter.matrix().unwrap().to_dense();
            out.push(dense_condition_general(&dense));
        }
        let r_gamma = helmholtz_radius_for_span(&sm, span).unwrap();
        let op = build_surface_operator(&sm, r_gamma).unwrap();
        // Filter map A = (K + M)^-1 M, dense.
        let lhs = op.operator().to_dense();
        let rhs = op.mass().to_dense();
        let map = lhs.cholesky().expect("operator is SPD").solve(&rhs);
        cond_implicit.push(dense_condition_general(&map));
    }

    for (k, &ratio) in ratios.iter().enumerate() {
        assert!(
            cond_implicit[k] < cond_gauss[k],
            "p/a = {ratio}: implicit {:.3e} !< gaussian {:.3e}",
            cond_implicit[k],
            cond_gauss[k]
        );
        assert!(
            cond_implicit[k] < cond_linear[k],
            "p/a = {ratio}: implicit {:.3e} !< linear {:.3e}",
            cond_implicit[k],
            cond_linear[k]
        );
    }
    for k in 1..ratios.len() {
        assert!(
            cond_gauss[k] > cond_gauss[k - 1],
            "gaussian conditioning must grow with p/a: {cond_gauss:?}"
        );
        assert!(
            cond_linear[k] > cond_linear[k - 1],
            "linear conditioning must grow with p/a: {cond_linear:?}"
        );
    }
    assert_runtime(5, start, 120.0);
    println!(
        "PASS criterion 5: conditioning ordering at p/a = {ratios:?}: implicit {:?} < gaussian {:?} / linear {:?}",
        cond_implicit
            .iter()
            .map(|c| format!("{c:.2e}"))
            .collect::<Vec<_>>(),
        cond_gauss.iter().map(|c| format!("{c:.2e}")).collect::<Vec<_>>(),
        cond_linear.iter().map(|c| format!("{c:.2e}")).collect::<Vec<_>>()
    );
}

#[test]
fn criterion_06_timing_trend() {
    let _guard = HEAVY.lock().unwrap_or_else(|e| e.into_inner());
    let sm = plate40();
    let a = sm.mean_edge_length();
    // At desk scale the explicit and implicit per-apply costs cross near
    // p/a = 20; the largest ratio sits well past the crossover so the
    // ordering assertion is not a coin toss.
    let ratios = [5.0, 10.0, 20.0, 40.0];
    let reps = 7usize;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let field = random_field(sm.n_nodes(), &mut rng);

    // Per-application cost on fresh geometry: build + one apply, the
    // honest per-iteration cost of an optimization loop.
    let mut explicit_mf = Vec::new();
    let mut implicit = Vec::new();
    for &ratio in &ratios {
        let span = ratio * a;
        let mut cfg = explicit_config(KernelFamily::Gaussian, span);
        cfg.matrix_mode = MatrixMode::MatrixFree;
        let mut times: Vec<f64> = (0..reps)
            .map(|_| {
                let t = Instant::now();
                let filter = ExplicitFilter::build(cfg, &sm).unwrap();
                std::hint::black_box(filter.forward(&field).unwrap());
                t.elapsed().as_secs_f64()
            })
            .collect();
        times.sort_by(|x, y| x.partial_cmp(y).unwrap());
        explicit_mf.push(times[reps / 2]);

        let r_gamma = helmholtz_radius_for_span(&sm, span).unwrap();
        let mut times: Vec<f64> = (0..reps)
            .map(|_| {
                let t = Instant::now();
                let op = build_surface_operator(&sm, r_gamma).unwrap();
                std::hint::black_box(op.forward(&field).unwrap());
                t.elapsed().as_secs_f64()
            })
            .collect();
        times.sort_by(|x, y| x.partial_cmp(y).unwrap());
        implicit.push(times[reps / 2]);
    }

    // Least-squares slope of explicit matrix-free time vs ratio.
    let n = ratios.len() as f64;
    let mean_x: f64 = ratios.iter().sum::<f64>() / n;
    let mean_y: f64 = explicit_mf.iter().sum::<f64>() / n;
    let slope: f64 = ratios
        .iter()
        .zip(&explicit_mf)
        .map(|(&x, &y)| (x - mean_x) * (y - mean_y))
        .sum::<f64>()
        / ratios.iter().map(|&x| (x - mean_x).powi(2)).sum::<f64>();
    assert!(
        slope > 0.0,
        "explicit matrix-free cost must grow with p/a: {explicit_mf:?}"
    );
    assert!(
        implicit.last().unwrap() < explicit_mf.last().unwrap(),
        "implicit {implicit:?} must be below explicit matrix-free {explicit_mf:?} at the \
         largest ratio"
    );
    println!(
        "PASS criterion 6: timing trend, explicit matrix-free {explicit_mf:?} s \
         (slope {slope:.2e} s/ratio), implicit {implicit:?} s"
    );
}

#[test]
fn criterion_07_adjoint_identity() {
    let start = Instant::now();
    let sm = fixtures::perforated_plate(3).unwrap();
    let span = 4.0 * sm.mean_edge_length();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;

    let mut check = |name: &str,
                     forward: &dyn Fn(&NodalField) -> NodalField,
                     transpose: &dyn Fn(&NodalField) -> NodalField,
                     n: usize,
                     rng: &mut ChaCha8Rng| {
        for _ in 0..10 {
            let s = random_field(n, rng);
            let g = random_field(n, rng);
            let lhs = forward(&s).dot(&g);
            let rhs = s.dot(&transpose(&g));
            let err = (lhs - rhs).abs() / (s.norm() * g.norm());
            assert!(err < 1e-10, "{name}: adjoint defect {err:e}");
            worst = worst.max(err);
        }
    };

    for (mode, damping) in [(MatrixMode::Stored, true), (MatrixMode::MatrixFree, false)] {
        let mut cfg = explicit_config(KernelFamily::Gaussian, span);
        cfg.matrix_mode = mode;
        cfg.damping = damping;
        let filter = ExplicitFilter::build(cfg, &sm).unwrap();
        check(
            "explicit",
            &|s| filter.forward(s).unwrap(),
            &|g| filter.transpose_apply(g).unwrap(),
            sm.n_nodes(),
            &mut rng,
        );
    }

    let op = build_surface_operator(&sm, 1.3).unwrap();
    check(
        "implicit surface",
        &|s| op.forward(s).unwrap(),
        &|g| op.map_sensitivities(g).unwrap().0,
        sm.n_nodes(),
        &mut rng,
    );

    let vm = fixtures::notched_block(3).unwrap();
    let ep = ElasticityParams::default();
    let bulk = build_bulk_surface_operator(&vm, &ep, 0.4, 1.0, None).unwrap();
    check(
        "bulk-surface",
        &|s| bulk.forward(s).unwrap(),
        &|g| bulk.map_sensitivities(g).unwrap().0,
        vm.n_nodes(),
        &mut rng,
    );

    assert_runtime(7, start, 10.0);
    println!("PASS criterion 7: adjoint identities, worst defect {worst:.2e} < 1e-10");
}

#[test]
fn criterion_08_gradient_checks() {
    let start = Instant::now();
    let vm = fixtures::notched_block(3).unwrap();
    let (lo, hi) = vm.bounding_box();
    let h = 1e-6 * (hi - lo).norm();
    let mut rng = ChaCha8Rng::seed_from_u64(5150);
    let mut worst = 0.0f64;

    // Volume.
    let grad = volume_response(&vm).unwrap().gradient;
    for _ in 0..5 {
        let dir = random_field(vm.n_nodes(), &mut rng);
        let eval = |sign: f64| {
            let mut x = vm.positions();
            x.add_scaled(&dir, sign * h);
            let mut m = vm.clone();
            m.set_node_positions(&x);
            volume_response(&m).unwrap().value
        };
        let fd = (eval(1.0) - eval(-1.0)) / (2.0 * h);
        let analytic = grad.dot(&dir);
        let err = (analytic - fd).abs() / fd.abs().max(1e-300);
        assert!(err < 1e-5, "volume gradient error {err:e}");
        worst = worst.max(err);
    }

    // Strain energy: clamp the bottom, pull a top-face design node.
    let ep = ElasticityParams::default();
    let dirichlet: Vec<bool> = vm.nodes().iter().map(|p| p.z < 1e-9).collect();
    let top = vm
        .nodes()
        .iter()
        .enumerate()
        .max_by(|(_, p), (_, q)| p.z.partial_cmp(&q.z).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let loads = vec![PointLoad {
        node: top,
        force: Vector3::new(0.05, 0.02, -0.1),
    }];
    let grad = strain_energy_response(&vm, &ep, &dirichlet, &loads)
        .unwrap()
        .gradient;
    for _ in 0..5 {
        let dir = random_field(vm.n_nodes(), &mut rng);
        let eval = |sign: f64| {
            let mut x = vm.positions();
            x.add_scaled(&dir, sign * h);
            let mut m = vm.clone();
            m.set_node_positions(&x);
            strain_energy_response(&m, &ep, &dirichlet, &loads)
                .unwrap()
                .value
        };
        let fd = (eval(1.0) - eval(-1.0)) / (2.0 * h);
        let analytic = grad.dot(&dir);
        let err = (analytic - fd).abs() / fd.abs().max(1e-300);
        assert!(err < 1e-5, "strain-energy gradient error {err:e}");
        worst = worst.max(err);
    }
    assert_runtime(8, start, 60.0);
    println!("PASS criterion 8: gradient checks, worst relative error {worst:.2e} < 1e-5");
}

fn volume_run(
    vm: &shapefilter::mesh::VolumeMesh,
    filter: FilterChoice,
    alpha: StepSize,
    max_iterations: usize,
) -> (f64, usize, TerminationReason) {
    let mut config = OptimizationConfig::new(ResponseKind::Volume, filter, max_iterations);
    config.step_size = alpha;
    let (state, _) = run_optimization(&config, vm).unwrap();
    let v0 = state.history.first().unwrap().objective;
    let v_end = state.history.last().unwrap().objective;
    ((v0 - v_end) / v0, state.iteration, state.termination)
}

/// Fixed step size shared by the optimization comparisons: the bulk-surface
/// auto rule (first step moves 1% of the bounding-box diagonal) evaluated
/// once on the initial geometry.
fn shared_alpha(vm: &shapefilter::mesh::VolumeMesh, ep: &ElasticityParams, r_gamma: f64) -> f64 {
    let op = build_bulk_surface_operator(vm, ep, r_gamma, 1.0, None).unwrap();
    let djdx = volume_response(vm).unwrap().gradient;
    let (_, scaled) = op.map_sensitivities(&djdx).unwrap();
    let mut dir = scaled;
    dir.scale(-1.0);
    let probe = op.forward(&dir).unwrap();
    let (lo, hi) = vm.bounding_box();
    0.01 * (hi - lo).norm() / probe.max_node_norm()
}

#[test]
fn criterion_09_bulk_surface_superiority() {
    let _guard = HEAVY.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let vm = fixtures::notched_block(4).unwrap();
    let ep = ElasticityParams::default();
    let r_gamma = 0.5 * vm.mean_edge_length();
    let alpha = shared_alpha(&vm, &ep, r_gamma);

    let (bulk_reduction, bulk_iters, bulk_term) = volume_run(
        &vm,
        FilterChoice::BulkSurface {
            r_gamma,
            beta: 1.0,
            elasticity: ep,
        },
        StepSize::Fixed(alpha),
        600,
    );
    let kernel = KernelSpec::new(KernelFamily::LinearHat, 3.0 * vm.mean_edge_length()).unwrap();
    let (seq_reduction, seq_iters, seq_term) = volume_run(
        &vm,
        FilterChoice::Sequential {
            surface: SequentialSurfaceFilter::Explicit(ExplicitFilterConfig {
                kernel,
                damping: true,
                normalization: true,
                matrix_mode: MatrixMode::Stored,
            }),
            elasticity: ep,
        },
        StepSize::Fixed(alpha),
        600,
    );

    // The sequential baseline dies of mesh distortion; the bulk-surface
    // run either distorts later or keeps the mesh valid through the whole
    // budget, so its reduction before first inversion is at least the
    // reduction at its stop.
    assert_eq!(
        seq_term,
        TerminationReason::MeshDistortion,
        "sequential run must end in distortion"
    );
    assert!(
        bulk_term == TerminationReason::MeshDistortion
            || bulk_term == TerminationReason::MaxIterations,
        "unexpected bulk termination {bulk_term:?}"
    );
    assert!(
        bulk_reduction > seq_reduction,
        "bulk-surface reduction {bulk_reduction:.4} must exceed sequential {seq_reduction:.4}"
    );
    assert_runtime(9, start, 300.0);
    println!(
        "PASS criterion 9: bulk-surface volume reduction {:.1}% (stop at {bulk_iters}, {bulk_term:?}) > \
         sequential {:.1}% (distortion stop at {seq_iters})",
        100.0 * bulk_reduction,
        100.0 * seq_reduction
    );
}

#[test]
fn criterion_10_beta_monotonicity() {
    let _guard = HEAVY.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let vm = fixtures::notched_block(4).unwrap();
    let ep = ElasticityParams::default();
    let r_gamma = 0.5 * vm.mean_edge_length();
    // Twice the 1%-of-bbox step: aggressive enough that weakly stiffened
    // runs distort inside the budget.
    let alpha = 2.0 * shared_alpha(&vm, &ep, r_gamma);

    // Distortion-stop iteration per beta; runs that keep the mesh valid
    // through the whole budget count as "no distortion yet" (unbounded).
    let mut stops: Vec<Option<usize>> = Vec::new();
    for beta in [0.125, 0.5, 1.0] {
        let (_, iters, term) = volume_run(
            &vm,
            FilterChoice::BulkSurface {
                r_gamma,
                beta,
                elasticity: ep,
            },
            StepSize::Fixed(alpha),
            800,
        );
        match term {
            TerminationReason::MeshDistortion => stops.push(Some(iters)),
            TerminationReason::MaxIterations => stops.push(None),
            other => panic!("beta = {beta}: unexpected termination {other:?}"),
        }
    }
    assert!(
        stops[0].is_some(),
        "the weakest stiffening must distort inside the budget"
    );
    let ord: Vec<usize> = stops.iter().map(|s| s.unwrap_or(usize::MAX)).collect();
    assert!(
        ord[0] <= ord[1] && ord[1] <= ord[2],
        "distortion-stop iterations must be non-decreasing in beta: {stops:?}"
    );
    assert_runtime(10, start, 600.0);
    println!(
        "PASS criterion 10: distortion-stop iterations non-decreasing in beta: {stops:?} \
         for beta = [0.125, 0.5, 1.0]"
    );
}

#[test]
fn criterion_11_null_space_exactness() {
    let start = Instant::now();

    // Surface Laplace-Beltrami stiffness annihilates constants.
    let surfaces = [
        fixtures::plate(20, 0.15, 3).unwrap(),
        fixtures::perforated_plate(3).unwrap(),
        shapefilter::mesh::extract_boundary(&fixtures::notched_block(3).unwrap())
            .unwrap()
            .0,
        shapefilter::mesh::extract_boundary(&fixtures::ball(2).unwrap())
            .unwrap()
            .0,
    ];
    let mut worst = 0.0f64;
    for sm in &surfaces {
        let k = shapefilter::fem::surface_lb_stiffness(sm, 1.7).unwrap();
        let ones = vec![1.0; sm.n_nodes()];
        let y = k.spmv(&ones).unwrap();
        let defect = y.iter().fold(0.0f64, |m, v| m.max(v.abs())) / k.frobenius_norm().max(1e-300);
        assert!(defect <= 1e-12, "K_G constants defect {defect:e}");
        worst = worst.max(defect);
    }

    // Bulk elastic stiffness annihilates all six rigid modes.
    for vm in [
        fixtures::notched_block(3).unwrap(),
        fixtures::ball(2).unwrap(),
    ] {
        let ep = ElasticityParams::default();
        let k = shapefilter::fem::bulk_elastic_stiffness(
            &vm,
            &ep,
            shapefilter::fem::Stiffening::Constant(1.0),
        )
        .unwrap();
        let scale = k.frobenius_norm();
        let n = vm.n_nodes();
        let mut modes: Vec<NodalField> = Vec::new();
        for c in 0..3 {
            let mut dir = Vector3::zeros();
            dir[c] = 1.0;
            modes.push(NodalField::constant(n, dir));
        }
        for (u, v) in [(0, 1), (1, 2), (2, 0)] {
            let mut m = NodalField::zeros(n);
            for (i, p) in vm.nodes().iter().enumerate() {
                let mut d = Vector3::zeros();
                d[u] = -p[v];
                d[v] = p[u];
                m.set_node(i, d);
            }
            modes.push(m);
        }
        for mode in &modes {
            let y = k.spmv(mode.as_slice()).unwrap();
            let defect =
                y.iter().fold(0.0f64, |m, v| m.max(v.abs())) / (scale * mode.max_abs().max(1.0));
            assert!(defect <= 1e-12, "rigid-mode defect {defect:e}");
            worst = worst.max(defect);
        }
    }
    assert_runtime(11, start, 5.0);
    println!("PASS criterion 11: null-space exactness, worst defect {worst:.2e} < 1e-12");
}
