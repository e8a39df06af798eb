use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sst_core::inference::{generate, TraceSpec};
use sst_core::model::{ModelConfig, SstModel};
use sst_core::numerics::Tensor;
use sst_core::traceio::{load_model, save_model, Container, TraceArchive};
use sst_core::verify::synthetic::random_trace;
use sst_core::SstError;

#[test]
fn random_traces_round_trip_byte_identically() {
    for seed in 0..100 {
        let t = random_trace(seed);
        let bytes = t.to_bytes();
        let back = TraceArchive::from_bytes(&bytes).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_bytes(), bytes);
    }
}

#[test]
fn empty_trace_round_trips() {
    let t = TraceArchive::new(2, 4, 0, 0, 0, vec![], vec![]).unwrap();
    assert_eq!(TraceArchive::from_bytes(&t.to_bytes()).unwrap(), t);
}

#[test]
fn trace_of_a_run_round_trips_through_a_file() {
    let model = SstModel::init(ModelConfig::tiny(), 3).unwrap();
    let run = generate(&model, &[1, 2, 3], 4, 2, &TraceSpec { positions: None, top_k: 5 }).unwrap();
    let t = TraceArchive::from_run(&run).unwrap();
    assert_eq!((t.positions, t.iterations, t.layers, t.d, t.top_k), (4, 2, 2, 8, 5));
    for (p, rec) in run.records.iter().enumerate() {
        for (i, it) in rec.iterations.iter().enumerate() {
            let stored = t.hidden(i + 1, p, 1);
            assert!(stored.iter().zip(&it.hidden[1]).all(|(a, b)| *a == (*b as f32) as f64));
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.trace");
    t.write(&path).unwrap();
    assert_eq!(TraceArchive::read(&path).unwrap(), t);
}

#[test]
fn corrupted_or_resized_traces_are_rejected() {
    let bytes = random_trace(5).to_bytes();
    let mut flipped = bytes.clone();
    flipped[40] ^= 1;
    assert!(matches!(TraceArchive::from_bytes(&flipped), Err(SstError::Format(_))));
    let mut trailer = bytes.clone();
    *trailer.last_mut().unwrap() ^= 0x80;
    assert!(matches!(TraceArchive::from_bytes(&trailer), Err(SstError::Format(_))));
    for len in [0, 10, bytes.len() - 1] {
        assert!(matches!(TraceArchive::from_bytes(&bytes[..len]), Err(SstError::Format(_))));
    }
    let mut longer = bytes.clone();
    longer.push(0);
    assert!(matches!(TraceArchive::from_bytes(&longer), Err(SstError::Format(_))));
    let mut magic = bytes.clone();
    magic[0] = b'X';
    assert!(TraceArchive::from_bytes(&magic).is_err());
    let mut version = bytes;
    version[8] = 9;
    assert!(TraceArchive::from_bytes(&version).is_err());
}

#[test]
fn unordered_logprob_lists_are_rejected() {
    assert!(TraceArchive::new(1, 1, 1, 1, 2, vec![0.0], vec![(3, -2.0), (1, -1.0)]).is_err());
    assert!(TraceArchive::new(1, 1, 1, 1, 2, vec![0.0], vec![(3, -1.0), (1, -1.0)]).is_err());
    assert!(TraceArchive::new(1, 1, 1, 1, 2, vec![0.0], vec![(1, -1.0), (3, -1.0)]).is_ok());
}

fn random_container(seed: u64) -> Container {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let meta = (0..rng.random_range(0..5)).map(|i| (format!("key{i}"), format!("v{}", rng.random::<u32>()))).collect();
    let tensors = (0..rng.random_range(0..5))
        .map(|i| {
            let shape: Vec<usize> = (0..rng.random_range(0..3)).map(|_| rng.random_range(1..5)).collect();
            let n = shape.iter().product();
            (format!("t{i}"), Tensor::new(shape, (0..n).map(|_| rng.random::<f64>() - 0.5).collect()).unwrap())
        })
        .collect();
    Container { meta, tensors }
}

#[test]
fn random_containers_round_trip_byte_identically() {
    for seed in 0..100 {
        let c = random_container(seed);
        let bytes = c.to_bytes();
        let back = Container::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), bytes);
    }
}

#[test]
fn container_rejects_damage() {
    let bytes = random_container(3).to_bytes();
    let mut flipped = bytes.clone();
    let mid = bytes.len() / 2;
    flipped[mid] ^= 4;
    assert!(Container::from_bytes(&flipped).is_err());
    assert!(Container::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    let mut longer = bytes;
    longer.insert(20, 0);
    assert!(Container::from_bytes(&longer).is_err());
}

#[test]
fn model_checkpoint_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let model = SstModel::init(ModelConfig { tie_embeddings: false, ..ModelConfig::tiny() }, 8).unwrap();
    save_model(&model, &path).unwrap();
    let first = std::fs::read(&path).unwrap();
    let back = load_model(&path).unwrap();
    assert_eq!(back, model);
    save_model(&back, &path).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), first);
}
