use xlr_core::textproc::{preprocess, stem, term_frequencies};

#[test]
fn porter_reference_vectors() {
    let table = include_str!("data/porter_vectors.tsv");
    let mut checked = 0;
    let mut bad = Vec::new();
    for line in table.lines().filter(|l| !l.starts_with('#')) {
        let (word, want) = line.split_once('\t').unwrap();
        if stem(word) != want {
            bad.push(format!("{word}: got {} want {want}", stem(word)));
        }
        checked += 1;
    }
    assert!(checked > 6000);
    assert!(bad.is_empty(), "{} mismatches:\n{}", bad.len(), bad.join("\n"));
}

#[test]
fn tf_after_preprocess() {
    let tf = term_frequencies(&preprocess("Flood, flood! River."));
    assert_eq!(tf.into_iter().collect::<Vec<_>>(), vec![("flood".to_string(), 2), ("river".to_string(), 1)]);
}
