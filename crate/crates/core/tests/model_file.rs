mod common;

use std::sync::Arc;

use common::*;
use loghd::codebook::{build_codebook, CodebookSpec};
use loghd::harness::{generate_blobs, load_model, save_model, BlobSpec, ModelFile};
use loghd::loghd::estimate_profiles_encoded;
use loghd::{
    BudgetLedger, EncodedSet, Encoder, EncoderSpec, ErrorKind, LabeledDataset, LogHdModel, PrototypeModel,
    QuantSpec, StoredModel,
};

struct Fixture {
    train: EncodedSet,
    test: LabeledDataset,
    models: Vec<StoredModel>,
}

fn fixture(classes: usize, dim: usize) -> Fixture {
    let (train, test) = generate_blobs(&BlobSpec {
        classes,
        features: 6,
        train_per_class: 12,
        test_per_class: 10,
        spread: 0.15,
        seed: 13,
    })
    .unwrap();
    let enc = Arc::new(Encoder::new(EncoderSpec::new(6, dim, 8)).unwrap());
    let tr = EncodedSet::encode(&enc, &train).unwrap();
    let protos = PrototypeModel::from_encoded(enc, &tr).unwrap();
    let n = loghd::codebook::min_code_length(classes, 2) + 1;
    let cb = build_codebook(&CodebookSpec::new(classes, 2, n).with_seed(2)).unwrap();
    let log = LogHdModel::build(&protos, cb, &tr).unwrap();
    let models = vec![
        StoredModel::sparsehd(&protos, 0.4).unwrap(),
        StoredModel::hybrid(&log, 0.4, &tr).unwrap(),
        StoredModel::loghd(log),
        StoredModel::conventional(protos),
    ];
    Fixture { train: tr, test, models }
}

fn labels(classes: usize) -> Vec<i64> {
    (0..classes as i64).map(|c| 10 * c - 7).collect()
}

fn sample_bytes() -> Vec<u8> {
    let fx = fixture(4, 128);
    ModelFile::new(&fx.models[1], &QuantSpec::new(4).unwrap(), None, labels(4))
        .unwrap()
        .to_bytes()
}

#[test]
fn save_load_parity_for_every_method_and_precision() {
    let fx = fixture(5, 512);
    let dir = tempfile::tempdir().unwrap();
    let queries: Vec<&[f64]> = fx.test.features().iter().map(Vec::as_slice).take(100).collect();
    assert!(queries.len() >= 50);
    for model in &fx.models {
        for bits in [1u8, 2, 4, 8, 64] {
            let quant = if bits == 64 { QuantSpec::lossless() } else { QuantSpec::new(bits).unwrap() };
            let file = ModelFile::new(model, &quant, None, labels(5)).unwrap();
            let path = dir.path().join(format!("{}-{bits}.bin", model.method()));
            save_model(&path, &file).unwrap();
            let back = load_model(&path).unwrap();
            assert_eq!(back.state, file.state);
            assert_eq!(back.label_values, file.label_values);
            assert_eq!(back.model.method(), model.method());
            for x in &queries {
                assert_eq!(back.predict_raw(x).unwrap(), file.predict_raw(x).unwrap());
            }
        }
    }
}

#[test]
fn lossless_files_reproduce_the_model_exactly() {
    let fx = fixture(4, 256);
    for model in &fx.models {
        let file = ModelFile::new(model, &QuantSpec::lossless(), None, labels(4)).unwrap();
        let back = ModelFile::from_bytes(&file.to_bytes()).unwrap();
        for x in fx.test.features() {
            assert_eq!(back.model.predict(x).unwrap(), model.predict(x).unwrap());
        }
    }
}

#[test]
fn reloaded_profiles_match_recomputed_activations() {
    let fx = fixture(4, 256);
    for model in fx.models.iter().filter(|m| m.method() == loghd::Method::LogHd) {
        let file = ModelFile::new(model, &QuantSpec::lossless(), None, labels(4)).unwrap();
        let back = ModelFile::from_bytes(&file.to_bytes()).unwrap();
        let log = back.model.as_loghd().unwrap();
        let recomputed = estimate_profiles_encoded(log.bundles(), &fx.train).unwrap();
        for (a, b) in log.profiles().iter().zip(&recomputed) {
            assert!(max_abs_diff(a, b) <= 1e-9);
        }
    }
}

#[test]
fn every_truncation_is_a_format_error() {
    let bytes = sample_bytes();
    for len in 0..bytes.len() {
        let err = ModelFile::from_bytes(&bytes[..len]).unwrap_err();
        assert_eq!(err.kind(), ErrorKind::Format, "length {len}: {err}");
    }
    let mut long = bytes.clone();
    long.push(0);
    assert_eq!(ModelFile::from_bytes(&long).unwrap_err().kind(), ErrorKind::Format);
}

#[test]
fn corrupted_headers_and_payloads_are_rejected() {
    let bytes = sample_bytes();
    let mut magic = bytes.clone();
    magic[0] ^= 0xff;
    let mut version = bytes.clone();
    version[6] = 99;
    // last four bytes are the checksum; the payload precedes it
    let mut payload = bytes.clone();
    let at = bytes.len() - 5;
    payload[at] ^= 0x10;
    for (name, b) in [("magic", magic), ("version", version), ("payload", payload)] {
        let err = ModelFile::from_bytes(&b).unwrap_err();
        assert_eq!(err.kind(), ErrorKind::Format, "{name}: {err}");
    }
}

#[test]
fn one_bit_full_scale_layout() {
    let (classes, dim, n) = (26, 10_000, 5);
    let (train, _) = generate_blobs(&BlobSpec {
        classes,
        features: 4,
        train_per_class: 2,
        test_per_class: 1,
        spread: 0.1,
        seed: 1,
    })
    .unwrap();
    let enc = Arc::new(Encoder::new(EncoderSpec::new(4, dim, 0)).unwrap());
    let tr = EncodedSet::encode(&enc, &train).unwrap();
    let protos = PrototypeModel::from_encoded(enc, &tr).unwrap();
    let cb = build_codebook(&CodebookSpec::new(classes, 2, n)).unwrap();
    let model = StoredModel::loghd(LogHdModel::build(&protos, cb, &tr).unwrap());
    let file = ModelFile::new(&model, &QuantSpec::new(1).unwrap(), None, labels(classes)).unwrap();
    assert_eq!(file.state.bit_len(), (n * dim + classes * n) as u64);
    let ledger = BudgetLedger::from_state(&file.state, classes, dim);
    assert_eq!(ledger.total_bytes, file.state.payload().len());
    assert_eq!(ledger.total_bits(), file.state.bit_len());
    assert!((ledger.fraction() - 5.0 / 26.0).abs() < 1e-12);
}
