use super::model::Logits;
use super::vocab::Vocab;

/// Per-frame argmax (ties to the lowest class index).
pub fn best_path(l: &Logits) -> Vec<usize> {
    (0..l.frames())
        .map(|t| {
            let row = l.row(t);
            let mut best = 0;
            for k in 1..row.len() {
                if row[k] > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// Collapses adjacent repeats and drops blanks.
pub fn collapse(path: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &k in path {
        if Some(k) != prev && k != Vocab::BLANK {
            out.push(k);
        }
        prev = Some(k);
    }
    out
}

pub fn greedy_decode(l: &Logits, v: &Vocab) -> String {
    v.decode(&collapse(&best_path(l)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot(path: &[usize], classes: usize) -> Logits {
        let mut data = vec![0.0; path.len() * classes];
        for (t, &k) in path.iter().enumerate() {
            data[t * classes + k] = 1.0;
        }
        Logits::new(path.len(), classes, data).unwrap()
    }

    #[test]
    fn collapse_rules() {
        let v = Vocab::new("ab").unwrap();
        assert_eq!(greedy_decode(&one_hot(&[0, 0, 0], 3), &v), "");
        assert_eq!(greedy_decode(&one_hot(&[1, 1, 0, 2], 3), &v), "ab");
        assert_eq!(greedy_decode(&one_hot(&[1, 0, 1], 3), &v), "aa");
    }

    #[test]
    fn ties_go_to_the_lowest_index() {
        let v = Vocab::new("ab").unwrap();
        let l = Logits::new(2, 3, vec![0.0, 1.0, 1.0, 2.0, 2.0, 2.0]).unwrap();
        assert_eq!(best_path(&l), vec![1, 0]);
        assert_eq!(greedy_decode(&l, &v), "a");
    }
}
