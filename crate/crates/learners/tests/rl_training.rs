use imagine_core::corpus::read_corpus;
use imagine_core::{build_dataset, Tokenizer, Vocab};
use imagine_learners::{polyak_update, train_rl, ContextMlp, MlpSpec, SequenceModel, TrainConfig};
use proptest::prelude::*;

fn setup() -> (imagine_core::TransitionDataset, Vocab, ContextMlp) {
    let corpus = read_corpus(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/bc20.jsonl")).unwrap();
    let vocab = Vocab::build(corpus.iter().flat_map(|d| d.utterances.iter().map(|u| u.text.as_str())), false);
    let ds = build_dataset(&corpus, &vocab).unwrap();
    let spec = MlpSpec {
        hidden_dim: 32,
        ..MlpSpec::new(vocab.len(), vocab.specials())
    };
    (ds, vocab, ContextMlp::new(spec, 1))
}

#[test]
fn frozen_base_stays_put_and_finetuned_base_moves() {
    let (ds, vocab, base) = setup();
    let cfg = TrainConfig {
        iterations: 2,
        updates_per_iteration: 10,
        batch_size: 32,
        ..TrainConfig::default()
    };
    let frozen = train_rl(&ds, base.clone(), &vocab.vocab_id(), &cfg).unwrap();
    assert_eq!(frozen.base.params(), base.params());
    assert_eq!(frozen.log.len(), 20);
    let tuned = train_rl(
        &ds,
        base.clone(),
        &vocab.vocab_id(),
        &TrainConfig {
            finetune_base: true,
            ..cfg.clone()
        },
    )
    .unwrap();
    assert_ne!(tuned.base.params(), base.params());
    assert!(tuned.log.iter().all(|r| r.q_loss.is_finite() && r.v_loss.is_finite()));
}

#[test]
fn twin_and_conservative_variants_train() {
    let (ds, vocab, base) = setup();
    let cfg = TrainConfig {
        iterations: 3,
        updates_per_iteration: 20,
        batch_size: 64,
        learning_rate: 1e-2,
        twin_q: true,
        cql_weight: 0.5,
        ..TrainConfig::default()
    };
    let out = train_rl(&ds, base, &vocab.vocab_id(), &cfg).unwrap();
    let first = out.log.first().unwrap().q_loss;
    let last = out.log.last().unwrap().q_loss;
    assert!(last < first, "{first} -> {last}");
}

proptest! {
    #[test]
    fn polyak_contracts_distance(t in -10.0f64..10.0, o in -10.0f64..10.0, rate in 0.0f64..1.0) {
        let mut target = vec![t];
        polyak_update(&mut target, &[o], rate).unwrap();
        prop_assert!(((target[0] - o).abs() - (1.0 - rate) * (t - o).abs()).abs() < 1e-9);
    }
}
