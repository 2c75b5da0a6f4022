//! Preset architectures must reproduce the reference layer-by-layer
//! parameter counts exactly, and their outputs must respect the terminal
//! activation ranges on random latent inputs.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use waldo::model::{build_model, ArchitectureSpec};

fn assert_counts(arch: &ArchitectureSpec, expected: &[(&str, &[usize])]) {
    let got = arch.param_counts();
    for (component, want) in expected {
        let found = got
            .iter()
            .find(|(name, _)| name == component)
            .unwrap_or_else(|| panic!("{}: missing component {component}", arch.name));
        assert_eq!(
            found.1, *want,
            "{} {component}: expected {want:?}, got {:?}",
            arch.name, found.1
        );
    }
}

#[test]
fn kdd_parameter_counts() {
    let arch = ArchitectureSpec::kdd();
    let dec: &[usize] = &[2112, 7865];
    assert_counts(
        &arch,
        &[
            ("encoder", &[7808, 2080]),
            ("inlier_decoder", dec),
            ("outlier_decoder", dec),
            ("discriminator", &[1056, 33]),
        ],
    );
    let mut model = build_model::<f32>(arch, 0).unwrap();
    assert_eq!(model.encoder.param_count(), 9888);
    assert_eq!(model.inlier_decoder.param_count(), 9977);
    assert_eq!(model.discriminator.param_count(), 1089);
}

#[test]
fn mnist_parameter_counts() {
    let arch = ArchitectureSpec::mnist();
    let dec: &[usize] = &[517_440, 819_360, 320, 204_880, 160, 1281];
    assert_counts(
        &arch,
        &[
            (
                "encoder",
                &[640, 51_200, 160, 204_800, 320, 819_200, 640, 10_272],
            ),
            ("inlier_decoder", dec),
            ("outlier_decoder", dec),
            ("discriminator", &[5280, 25_760, 25_760, 25_760, 161]),
        ],
    );
    assert_eq!(ArchitectureSpec::fmnist().param_counts(), arch.param_counts());
}

#[test]
fn cifar10_parameter_counts() {
    let arch = ArchitectureSpec::cifar10();
    let dec: &[usize] = &[684_288, 524_416, 256, 131_136, 128, 3075];
    assert_counts(
        &arch,
        &[
            (
                "encoder",
                &[1536, 32_768, 128, 131_072, 256, 524_288, 512, 32_800],
            ),
            ("inlier_decoder", dec),
            ("outlier_decoder", dec),
            ("discriminator", &[4224, 16_512, 16_512, 16_512, 129]),
        ],
    );
}

/// Decoder outputs stay inside the terminal activation range and the
/// discriminator emits probabilities, over a thousand random latents each.
#[test]
fn preset_output_ranges() {
    let cases: Vec<(ArchitectureSpec, f64, f64)> = vec![
        (ArchitectureSpec::kdd(), -1.0, 1.0),
        (ArchitectureSpec::mnist(), 0.0, 1.0),
        (ArchitectureSpec::cifar10(), 0.0, 1.0),
        (ArchitectureSpec::desk_28x28("desk-mnist"), 0.0, 1.0),
        (ArchitectureSpec::weekly7(), -1.0, 1.0),
    ];
    for (arch, lo, hi) in cases {
        let name = arch.name.clone();
        let mut model = build_model::<f32>(arch, 17).unwrap();
        let z = model.sample_prior(1000, 23);
        for (tag, x) in [
            ("inlier", model.decode_inlier(&z).unwrap()),
            ("outlier", model.decode_outlier(&z).unwrap()),
        ] {
            for &v in x.iter() {
                assert!(
                    v.is_finite() && (lo as f32..=hi as f32).contains(&v),
                    "{name} {tag} decoder emitted {v}, range [{lo},{hi}]"
                );
            }
        }
        let d = model.discriminate(&z).unwrap();
        assert_eq!(d.dim(), (1000, 1));
        for &v in d.iter() {
            assert!(v > 0.0 && v < 1.0, "{name} discriminator emitted {v}");
        }
    }
}

/// The unbounded toy preset reconstructs into the data scale: outputs are
/// finite and not range-clamped.
#[test]
fn toy_preset_is_unbounded() {
    let mut model = build_model::<f32>(ArchitectureSpec::toy2d(), 5).unwrap();
    let z = model.sample_prior(100, 3);
    let x = model.decode_inlier(&(z * 50.0f32)).unwrap();
    assert!(x.iter().all(|v| v.is_finite()));
    assert!(x.iter().any(|v| v.abs() > 1.0), "decoder output saturated");
}

/// Chunked evaluation must be identical to one-shot evaluation.
#[test]
fn chunked_eval_matches_single_batch() {
    let mut model = build_model::<f32>(ArchitectureSpec::kdd(), 9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let x = Array2::from_shape_fn((300, 121), |_| rng.random_range(-1.0f32..1.0));
    let z_all = model.encode(&x).unwrap();
    for start in [0usize, 128, 256] {
        let end = (start + 128).min(300);
        let part = model
            .encode(&x.slice(ndarray::s![start..end, ..]).to_owned())
            .unwrap();
        assert_eq!(part, z_all.slice(ndarray::s![start..end, ..]).to_owned());
    }
}
