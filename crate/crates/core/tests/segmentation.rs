use sqa_core::baselines::split_sentences;

/// Hand-labeled paragraphs, one sentence per entry.
const PARAGRAPHS: &[&[&str]] = &[
    &[
        "Dr. Smith arrived.",
        "He left.",
        "Mr. Jones stayed behind with Mrs. Patel until noon.",
        "Was anyone else there?",
        "Nobody knows!",
    ],
    &[
        "J. R. R. Tolkien wrote The Hobbit in the 1930s.",
        "The book was published in 1937.",
        "It sold well in the U.S. and abroad.",
        "Pi is roughly 3.14159 and e is about 2.718.",
        "Prices rose by 4.5 percent that year.",
    ],
    &[
        "\"Where are you going?\" she asked.",
        "He replied, \"To the market.\"",
        "Then he walked away.",
        "(The market was closed.)",
        "Nobody told him.",
    ],
    &[
        "The meeting started at 9 a.m. sharp.",
        "Prof. Ivanova gave the keynote.",
        "Her talk covered graphs, trees, etc. in some depth.",
        "Questions followed.",
        "Lunch was served at noon.",
    ],
    &[
        "Scooby-Doo is a Great Dane.",
        "The show first aired in 1969!",
        "Fred, Daphne, Velma and Shaggy solve mysteries.",
        "Each episode ends with an unmasking.",
        "Villains often say \"meddling kids\" at the end.",
    ],
    &[
        "Mt. Everest is the highest mountain above sea level.",
        "It lies on the border of Nepal and China.",
        "Climbers use supplemental oxygen.",
        "Gen. Bruce led an early expedition.",
        "Many attempts failed.",
    ],
    &[
        "What is the boiling point of water?",
        "At sea level it is 100 degrees Celsius.",
        "At altitude the value drops.",
        "Cooks adjust recipes accordingly.",
        "Pressure cookers raise the boiling point.",
    ],
    &[
        "St. Petersburg was founded in 1703.",
        "Peter the Great chose the site.",
        "The city served as capital for two centuries.",
        "Its canals earned it a nickname.",
        "Visitors arrive by train, e.g. from Moscow.",
    ],
    &[
        "The committee voted no.",
        "Then it adjourned.",
        "A statement was issued the next day.",
        "It read: \"We will revisit this.\"",
        "Observers were surprised.",
    ],
    &[
        "Fig. 3 shows the results.",
        "Accuracy improved markedly.",
        "See Sec. 4 for details!",
        "Are these gains robust?",
        "Further work will tell.",
    ],
];

#[test]
fn hand_labeled_fixture() {
    let expected: Vec<&str> = PARAGRAPHS.iter().flat_map(|p| p.iter().copied()).collect();
    assert_eq!(expected.len(), 50);
    let body = PARAGRAPHS
        .iter()
        .map(|p| p.join(" "))
        .collect::<Vec<_>>()
        .join("\n\n");
    let got: Vec<String> = split_sentences(&body).sentences.into_iter().map(|s| s.text).collect();
    let correct = got.iter().zip(&expected).filter(|(g, e)| g == *e).count();
    assert_eq!(got, expected, "{correct}/50 correct");
}

#[test]
fn idempotent_on_single_sentences() {
    for p in PARAGRAPHS {
        for s in p.iter() {
            let list = split_sentences(s);
            assert_eq!(list.len(), 1, "{s}");
            assert_eq!(list.sentences[0].text, *s);
        }
    }
}
