//! Seeded generator for a raw case export whose citations are known in
//! advance.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FIRST: [&str; 10] = ["Kestrel", "Harbor", "Summit", "Cobalt", "Juniper", "Meridian", "Falcon", "Granite", "Lantern", "Orchid"];
const SECOND: [&str; 5] = ["Films", "Media", "Records", "Studios", "Publishing"];
const DEFENDANTS: [&str; 10] = ["Alder", "Birch", "Cedar", "Dogwood", "Elm", "Fir", "Hazel", "Laurel", "Maple", "Spruce"];

/// Cases outside the corpus, with their reporter citations.
pub const EXTERNAL: [(&str, &str); 6] = [
    ("Feist Publications, Inc. v. Rural Telephone Service Co.", "499 U.S. 340"),
    ("Harper & Row Publishers, Inc. v. Nation Enterprises", "471 U.S. 539"),
    ("Peer International Corp. v. Pausa Records, Inc.", "909 F.2d 1332"),
    ("Columbia Pictures Television v. Krypton Broadcasting", "106 F.3d 284"),
    ("Fitzgerald Publishing Co. v. Baylor Publishing Co.", "807 F.2d 1110"),
    ("Bryant v. Media Right Productions, Inc.", "603 F.3d 135"),
];

/// Statute citations as written, with their canonical keys.
pub const STATUTES: [(&str, &str); 5] = [
    ("17 U.S.C. § 504(c)(2)", "17USC504(c)(2)"),
    ("17 U.S.C. § 505", "17USC505"),
    ("17 U.S.C. § 106", "17USC106"),
    ("17 U.S.C. § 412", "17USC412"),
    ("15 U.S.C. § 1117(a)", "15USC1117(a)"),
];

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Planted {
    /// Index of the cited corpus document.
    Internal(usize),
    External(usize),
    Statute(usize),
}

pub struct SyntheticCorpus {
    pub raw: String,
    pub titles: Vec<String>,
    /// Citations placed in each document's opinion, in any order.
    pub planted: Vec<Vec<Planted>>,
}

impl SyntheticCorpus {
    pub fn expected_edges(&self) -> usize {
        self.planted.iter().map(Vec::len).sum()
    }

    pub fn expected_external_nodes(&self) -> usize {
        self.distinct(|p| matches!(p, Planted::External(_)))
    }

    pub fn expected_statute_nodes(&self) -> usize {
        self.distinct(|p| matches!(p, Planted::Statute(_)))
    }

    fn distinct(&self, keep: impl Fn(&Planted) -> bool) -> usize {
        self.planted.iter().flatten().filter(|p| keep(p)).collect::<BTreeSet<_>>().len()
    }
}

fn title(i: usize) -> String {
    format!("{} {} v. {} Networks", FIRST[i % 10], SECOND[i / 10], DEFENDANTS[(i * 7) % 10])
}

fn reporter(i: usize) -> String {
    format!("{} F. Supp. 2d {}", 300 + i, 100 + 7 * i)
}

pub fn generate(n: usize, seed: u64) -> SyntheticCorpus {
    assert!(n <= 50, "title space holds 50 cases");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let titles: Vec<String> = (0..n).map(title).collect();
    let mut raw = String::new();
    let mut planted = Vec::with_capacity(n);
    for i in 0..n {
        let mut cites = Vec::new();
        let mut paragraphs = vec![format!(
            "Plaintiff {} alleges that defendant copied its catalog without permission. The parties dispute liability and remedies.",
            FIRST[i % 10]
        )];
        for _ in 0..rng.random_range(1..=4) {
            let roll = rng.random_range(0..3);
            let sentence = match roll {
                0 if n > 1 => {
                    let mut j = rng.random_range(0..n);
                    if j == i {
                        j = (j + 1) % n;
                    }
                    cites.push(Planted::Internal(j));
                    format!("See {}, {} (D. Haw. 2004).", titles[j], reporter(j))
                }
                1 => {
                    let k = rng.random_range(0..EXTERNAL.len());
                    cites.push(Planted::External(k));
                    format!("The court in {}, {} (1990), reached a similar conclusion.", EXTERNAL[k].0, EXTERNAL[k].1)
                }
                _ => {
                    let k = rng.random_range(0..STATUTES.len());
                    cites.push(Planted::Statute(k));
                    format!("Relief is available under {}.", STATUTES[k].0)
                }
            };
            paragraphs.push(format!("{} {}", ["Turning to the claims,", "On this record,", "For remedies,"].choose(&mut rng).unwrap(), sentence));
        }
        paragraphs.push("Judgment shall enter accordingly.".into());
        raw.push_str(&format!(
            "{}\nCase No. {}-cv-{:05}\nCourt: United States District Court\nDistrict: District of Hawaii\nDecided: March {}, 2010\nOpinion\n\n{}\n",
            titles[i],
            10 + i % 10,
            1000 + i,
            1 + i % 28,
            paragraphs.join("\n\n")
        ));
        if i + 1 < n {
            raw.push_str("End of Document\n");
        }
        planted.push(cites);
    }
    SyntheticCorpus { raw, titles, planted }
}
