use sst_core::inference::PassFailMatrix;
use sst_core::probe::{build_labels, must_halt_questions};

fn bits(s: &str) -> Vec<bool> {
    s.chars().map(|c| c == '1').collect()
}

/// Six questions tallied by hand: correct depth comes from the staged run,
/// the MUST_HALT condition from the flat run one deeper.
#[test]
fn six_question_tally() {
    let matrix = PassFailMatrix {
        staged: ["0100", "1000", "0000", "0001", "0011", "1111"].map(bits).to_vec(),
        flat: ["0101", "1111", "0000", "0001", "0010", "1000"].map(bits).to_vec(),
    };
    let turns = [2, 1, 3, 1, 3, 2];
    let items = build_labels(&matrix, &turns, |q, t, d| Some(vec![q as f64, t as f64, d as f64])).unwrap();

    assert_eq!(items.len(), 20);
    assert_eq!(items.iter().filter(|i| i.must_halt).count(), 7);
    assert_eq!(must_halt_questions(&items), vec![0, 4, 5]);
    let per_q = |q: usize| items.iter().filter(|i| i.question == q).count();
    assert_eq!([0, 1, 2, 3, 4, 5].map(per_q), [4, 1, 0, 4, 9, 2]);
    for i in &items {
        assert_eq!(i.hidden, vec![i.question as f64, i.turn as f64, i.depth as f64]);
        let correct = [2, 1, 0, 4, 3, 1][i.question];
        assert!(i.depth <= correct);
        assert_eq!(i.must_halt, i.depth == correct && [true, false, false, false, true, true][i.question]);
    }
}

#[test]
fn turn_count_must_match() {
    let matrix = PassFailMatrix { staged: vec![bits("10")], flat: vec![bits("10")] };
    assert!(build_labels(&matrix, &[1, 1], |_, _, _| Some(vec![0.0])).is_err());
    assert!(build_labels(&matrix, &[1], |_, _, d| Some(vec![0.0; d])).is_ok());
}
