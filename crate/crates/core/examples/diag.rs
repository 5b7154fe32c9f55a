//! Scratch diagnostics for estimation quality on the synthetic scene.

use gcvflow_core::estimator::{estimate_frame_pair, Algorithm, EstimatorConfig};
use gcvflow_core::metrics;
use gcvflow_core::synth::{add_noise, gen_rect_sequence, RectSceneParams};
use gcvflow_core::imgseq::Sequence;

fn main() {
    let params = RectSceneParams {
        width: 64,
        height: 64,
        rect_x: 24,
        rect_y: 24,
        rect_w: 16,
        rect_h: 16,
        frames: 2,
        seed: 5,
        ..RectSceneParams::default()
    };
    let (seq, truths) = gen_rect_sequence(&params).unwrap();
    let truth = &truths[0];

    // Noisy copy at 20 dB
    let noisy = Sequence::new(vec![
        add_noise(&seq.frames()[0], 20.0, 100).unwrap(),
        add_noise(&seq.frames()[1], 20.0, 101).unwrap(),
    ])
    .unwrap();

    for (tmove, t) in [(3.0, 3.0), (0.5, 3.0), (0.5, 2.0), (0.5, 1.5), (0.0, 1.0), (0.5, 1.0)] {
        println!("== tmove={tmove} T={t} ==");
        for algo in [Algorithm::Wiener, Algorithm::Lscrv, Algorithm::Lscrv2] {
            let mut cfg = EstimatorConfig::for_algorithm(algo);
            cfg.move_threshold = tmove;
            cfg.dfd_threshold = t;
            let t0 = std::time::Instant::now();
            let (flow, status) =
                estimate_frame_pair(&seq.frames()[1], &seq.frames()[0], &cfg).unwrap();
            let dt = t0.elapsed();
            let (st, cv, fb) = status.counts();
            let (mx, my) = metrics::mse(&flow, truth).unwrap();
            let (bx, by) = metrics::bias(&flow, truth).unwrap();
            let report = metrics::build_report(
                &seq,
                std::slice::from_ref(&flow),
                Some(std::slice::from_ref(truth)),
            )
            .unwrap();
            println!(
                "  clean {:7} {:6.1?} st={st:4} cv={cv:4} fb={fb:4} mse=({mx:.3},{my:.3}) bias=({bx:+.3},{by:+.3}) imc={:.2}",
                algo.name(),
                dt,
                report.imc_db
            );

            let (nflow, _) = estimate_frame_pair(&noisy.frames()[1], &noisy.frames()[0], &cfg).unwrap();
            let (nmx, nmy) = metrics::mse(&nflow, truth).unwrap();
            let nreport = metrics::build_report(
                &noisy,
                std::slice::from_ref(&nflow),
                Some(std::slice::from_ref(truth)),
            )
            .unwrap();
            println!(
                "  noisy {:7}        mse=({nmx:.3},{nmy:.3}) imc={:.2} dfd2={:.2} fd2={:.2}",
                algo.name(),
                nreport.imc_db,
                nreport.mean_sq_dfd,
                nreport.mean_sq_fd,
            );
        }
    }
}
