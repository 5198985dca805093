//! Writes a small synthetic corpus: predictions from four models, pointwise and
//! framed pairwise annotations from three annotators, an argument table and a
//! config.
//!
//! Usage: `cargo run --example make_fixture -- <out-dir>`

use std::collections::BTreeSet;
use std::fs::File;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dualscale::corpus::{
    write_arguments, write_pairwise, write_pointwise, write_predictions, ArgumentRef, BinaryLabel, Choice, Framing,
    PairwiseAnnotation, PointwiseAnnotation, PredictionRecord, PredictionValue,
};

const N_ARGS: usize = 60;
const REPS: u32 = 5;

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Political,
    Ambiguous,
    Apolitical,
}

fn main() -> dualscale::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixture".into()));
    std::fs::create_dir_all(&out).map_err(|e| dualscale::Error::io(&out, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    let ids: Vec<String> = (1..=N_ARGS).map(|i| format!("a{i:02}")).collect();
    let kinds: Vec<Kind> = (0..N_ARGS)
        .map(|i| match i {
            0..30 => Kind::Political,
            30..45 => Kind::Ambiguous,
            _ => Kind::Apolitical,
        })
        .collect();
    let position: Vec<f64> = (0..N_ARGS).map(|_| rng.random_range(5.0..95.0)).collect();

    let mut predictions = Vec::new();
    for (m, model) in ["m1", "m2", "m3", "m4"].iter().enumerate() {
        for (a, id) in ids.iter().enumerate() {
            let p_na = match (m, kinds[a]) {
                (3, _) => 0.8,
                (_, Kind::Political) => 0.0,
                (_, Kind::Ambiguous) => 0.5,
                (_, Kind::Apolitical) => 1.0,
            };
            for r in 1..=REPS {
                let value = if rng.random_bool(p_na) {
                    PredictionValue::Na
                } else {
                    let noise = rng.random_range(-8.0..8.0) * (1.0 + m as f64 * 0.5);
                    PredictionValue::Score((position[a] + noise).clamp(0.0, 100.0).round())
                };
                predictions.push(PredictionRecord {
                    model_id: model.to_string(),
                    argument_id: id.clone(),
                    repetition: r,
                    value,
                });
            }
        }
    }

    let annotators = ["h1", "h2", "h3"];
    let mut pointwise = Vec::new();
    for (a, id) in ids.iter().enumerate() {
        let (truth, flip) = match kinds[a] {
            Kind::Political => (BinaryLabel::Political, 0.1),
            Kind::Ambiguous => (
                if rng.random_bool(0.5) {
                    BinaryLabel::Political
                } else {
                    BinaryLabel::Apolitical
                },
                0.3,
            ),
            Kind::Apolitical => (BinaryLabel::Apolitical, 0.1),
        };
        for h in annotators {
            let label = if rng.random_bool(flip) { truth.flip() } else { truth };
            pointwise.push(PointwiseAnnotation {
                annotator_id: h.into(),
                argument_id: id.clone(),
                label,
            });
        }
    }

    // Pairwise items are the political arguments: a random spanning path plus random pairs.
    let mut items: Vec<usize> = (0..N_ARGS).filter(|&a| kinds[a] == Kind::Political).collect();
    items.shuffle(&mut rng);
    let mut pairs: BTreeSet<(usize, usize)> = items.windows(2).map(|w| (w[0].min(w[1]), w[0].max(w[1]))).collect();
    while pairs.len() < 90 {
        let (x, y) = (
            items[rng.random_range(0..items.len())],
            items[rng.random_range(0..items.len())],
        );
        if x != y {
            pairs.insert((x.min(y), x.max(y)));
        }
    }
    let mut pairwise = Vec::new();
    for &(i, j) in &pairs {
        for h in annotators {
            let framing = if rng.random_bool(0.5) {
                Framing::Left
            } else {
                Framing::Right
            };
            let gap = position[i] - position[j];
            let choice = if gap.abs() < 3.0 && rng.random_bool(0.3) {
                Choice::Equal
            } else {
                let i_more_right = rng.random_bool(1.0 / (1.0 + (-gap / 10.0).exp()));
                match (framing, i_more_right) {
                    (Framing::Right, true) | (Framing::Left, false) => Choice::First,
                    _ => Choice::Second,
                }
            };
            pairwise.push(PairwiseAnnotation {
                annotator_id: h.into(),
                arg_i: ids[i].clone(),
                arg_j: ids[j].clone(),
                framing,
                choice,
            });
        }
    }

    let arguments: Vec<ArgumentRef> = ids
        .iter()
        .enumerate()
        .map(|(a, id)| ArgumentRef {
            argument_id: id.clone(),
            debate_id: Some(format!("d{}", a / 10 + 1)),
            locution: Some(format!("locution {}", a + 1)),
            proposition: None,
        })
        .collect();

    let create = |name: &str| File::create(out.join(name)).map_err(|e| dualscale::Error::io(out.join(name), e));
    write_predictions(create("predictions.csv")?, &predictions)?;
    write_pointwise(create("pointwise.csv")?, &pointwise)?;
    write_pairwise(create("pairwise.csv")?, &pairwise)?;
    write_arguments(create("arguments.csv")?, &arguments)?;
    std::fs::write(
        out.join("config.toml"),
        r#"seed = 42
reference = "E3"
output_dir = "out"
baseline_samples = 200

[inputs]
predictions = "predictions.csv"
pointwise = "pointwise.csv"
pairwise = "pairwise.csv"
arguments = "arguments.csv"

[[ensembles]]
id = "E3"
members = ["m1", "m2", "m3", "m4"]
high_confidence = true

[[ensembles]]
id = "E_all"
members = ["m1", "m2", "m3", "m4"]

[buckets]
h_pol = 10
l = 3
h_apol = 10

[pairs]
intra = 4
inter = 2
"#,
    )
    .map_err(|e| dualscale::Error::io(out.join("config.toml"), e))?;
    println!("wrote fixture to {}", out.display());
    Ok(())
}
