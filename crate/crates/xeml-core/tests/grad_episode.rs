//! End-to-end gradient check: Conv-2 encoder + prototypical episode loss
//! against central finite differences of the f64 reference forward.

use xeml_core::encoder::build_encoder;
use xeml_core::protonet::episode_loss_train;
use xeml_core::reference::{episode_loss_direct, F64Params};
use xeml_core::rng::{stream_rng, train_episode_stream};
use xeml_core::sampler::{sample_episode, EpisodeSpec, SampleMode};
use xeml_core::synth::generate_synthetic;
use xeml_core::{EncoderConfig, Tape};

#[test]
fn episode_gradients_match_f64_finite_differences_on_every_parameter() {
    let cfg = EncoderConfig {
        depth: 2,
        channels: 8,
        input_size: 16,
        input_channels: 3,
    };
    let dataset = generate_synthetic(2, 4, 6, 16, 31).unwrap();
    let spec = EpisodeSpec {
        n_way: 3,
        k_shot: 2,
        m_query: 2,
        mode: SampleMode::CrossDomain,
    };
    let mut rng = stream_rng(31, train_episode_stream(0));
    let episode = sample_episode(&dataset, &spec, &mut rng).unwrap();

    // The train pass touches only batchnorm running stats, never the
    // parameter values, so the store still matches the differentiated point.
    let mut store = build_encoder(&cfg, 7).unwrap();
    let mut tape = Tape::train();
    let (loss, _) = episode_loss_train(&mut tape, &mut store, &cfg, &episode).unwrap();
    tape.backward(&loss).unwrap();
    store.absorb_grads(&tape).unwrap();

    let reference_params = F64Params::from_store(&store);
    let analytic: Vec<(String, Vec<f32>)> = store
        .params()
        .map(|p| (p.path().to_string(), p.grad().unwrap().to_vec()))
        .collect();
    let flat_grad: Vec<f32> = analytic.iter().flat_map(|(_, g)| g.iter().copied()).collect();
    assert_eq!(flat_grad.len(), reference_params.total_len());

    // Reference loss sanity: the f64 forward agrees with the f32 engine.
    let f64_loss = episode_loss_direct(&reference_params, &cfg, &episode);
    let f32_loss = loss.scalar_value().unwrap() as f64;
    assert!(
        (f64_loss - f32_loss).abs() < 1e-4,
        "forward mismatch: {f64_loss} vs {f32_loss}"
    );

    // h=1e-4: below the distance to the nearest maxpool argmax flips, so
    // the f64 oracle's own error sits at the f32-analytic noise floor
    // (coarser steps make the oracle itself wrong by percents).
    let h = 1e-4;
    let mut checked = 0usize;
    let mut failures = Vec::new();
    for flat in 0..reference_params.total_len() {
        let mut plus = F64Params::from_store(&store);
        plus.nudge(flat, h);
        let mut minus = F64Params::from_store(&store);
        minus.nudge(flat, -h);
        let fd = (episode_loss_direct(&plus, &cfg, &episode)
            - episode_loss_direct(&minus, &cfg, &episode))
            / (2.0 * h);
        let a = flat_grad[flat] as f64;
        let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-4);
        checked += 1;
        if rel >= 1e-2 {
            let (path, offset) = reference_params.locate(flat);
            failures.push(format!("{path}[{offset}]: analytic {a} vs fd {fd} (rel {rel:.3})"));
        }
    }
    let pass_fraction = 1.0 - failures.len() as f64 / checked as f64;
    assert!(
        pass_fraction >= 0.99,
        "only {:.2}% of {checked} coordinates pass; first failures: {:?}",
        pass_fraction * 100.0,
        &failures[..failures.len().min(5)]
    );
}
