#![allow(dead_code)]

use vidqa::alliance::{AgentScript, Capability, ScriptEntry};
use vidqa::ingest::SyntheticVideo;
use vidqa::runner::{CutVideo, ManifestEntry, VideoRef};

pub fn options(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("option number {i}")).collect()
}

pub fn cut_video(id: &str) -> VideoRef {
    VideoRef::Cuts(CutVideo {
        id: id.into(),
        duration: 60.0,
        frames: 60,
        cuts: vec![20.0, 40.0],
    })
}

pub fn synthetic_source() -> vidqa::ingest::VideoSource {
    SyntheticVideo::with_cuts(60.0, 60, &[20.0, 40.0]).source().unwrap()
}

pub fn entry(id: &str, gold: Option<&str>) -> ManifestEntry {
    ManifestEntry {
        id: id.into(),
        video: cut_video("clip"),
        question: format!("What happens in {id}?"),
        options: options(5),
        subtitles: None,
        gold: gold.map(String::from),
    }
}

/// An agent answering `answers[j]` in round `j + 1` and rating with
/// `ratings[j]` in that round.
pub fn scripted(id: &str, answers: &[&str], ratings: &[&str]) -> AgentScript {
    let mut entries = vec![
        ScriptEntry::new(Capability::Clue, format!("{id} looks for the key object")),
        ScriptEntry::new(Capability::Refine, format!("{id} refined clue")),
        ScriptEntry::new(Capability::Summarize, format!("summary by {id}")),
    ];
    for (j, a) in answers.iter().enumerate() {
        entries.push(ScriptEntry::new(Capability::Act, format!("{a}) chosen")).round(j as u32 + 1));
        entries.push(
            ScriptEntry::new(Capability::Reason, format!("{id} saw evidence for {a}"))
                .round(j as u32 + 1),
        );
    }
    for (j, r) in ratings.iter().enumerate() {
        entries.push(ScriptEntry::new(Capability::Eval, r.to_string()).round(j as u32 + 1));
    }
    AgentScript {
        id: id.into(),
        entries,
    }
}

pub struct E2eFixture {
    pub manifest: std::path::PathBuf,
    pub library: std::path::PathBuf,
    pub config: vidqa::config::RunConfig,
    /// (question id, gold, designed correct, designed rounds)
    pub design: Vec<(String, String, bool, usize)>,
}

const LABELS: [&str; 5] = ["A", "B", "C", "D", "E"];

fn wrong(gold: usize, k: usize) -> &'static str {
    LABELS[(gold + 1 + k) % 5]
}

/// Twenty questions over three clips. Each question's evidence sits in one
/// block; the clue keyword steers the similarity port there and agents only
/// answer correctly from frames inside it. Questions 18 and 19 are designed
/// to end on a wrong answer.
pub fn e2e_fixture(dir: &std::path::Path) -> E2eFixture {
    use vidqa::selection::SimilarityRule;
    let blocks = [(0.0, 20.0), (20.0, 40.0), (40.0, 60.0)];
    let mut questions = Vec::new();
    let mut rules = Vec::new();
    let mut scripts: Vec<AgentScript> = (1..=3)
        .map(|k| AgentScript {
            id: format!("agent{k}"),
            entries: vec![
                ScriptEntry::new(Capability::Summarize, format!("agent{k} summary")),
                ScriptEntry::new(Capability::Reason, format!("agent{k} cites the frames")),
            ],
        })
        .collect();
    let mut design = Vec::new();
    for i in 0..20usize {
        let qid = format!("q{i:02}");
        let gold = (i * 3) % 5;
        let (start, end) = blocks[i % 3];
        let keyword = format!("marker-{qid}");
        rules.push(SimilarityRule {
            keyword: keyword.clone(),
            start,
            end,
            score: 0.95,
        });
        questions.push(ManifestEntry {
            id: qid.clone(),
            video: cut_video(&format!("clip{}", i % 3)),
            question: format!("Which activity happens in scene {i}?"),
            options: options(5),
            subtitles: None,
            gold: Some(LABELS[gold].to_string()),
        });
        // 0-9 unanimous; 10-13 one dissenter in round 1; 14-17 three-way split;
        // 18 unanimous but wrong; 19 the survivor of a split is wrong
        let (correct, rounds) = match i {
            0..=9 => (true, 1),
            10..=13 => (true, 2),
            14..=17 => (true, 3),
            18 => (false, 1),
            _ => (false, 2),
        };
        design.push((qid.clone(), LABELS[gold].to_string(), correct, rounds));
        for (k, script) in scripts.iter_mut().enumerate() {
            let e = &mut script.entries;
            e.push(ScriptEntry::new(Capability::Clue, format!("find the {keyword} object")).question(&qid));
            e.push(ScriptEntry::new(Capability::Refine, format!("look again for {keyword}")).question(&qid));
            let grounded = |label: &str| {
                let mut s = ScriptEntry::new(Capability::Act, format!("{label}) visible in frames"))
                    .question(&qid);
                s.when_frames_in = Some((start, end));
                s.otherwise = Some(format!("{}) guess", wrong(gold, 3)));
                s
            };
            let fixed = |label: &str, round: u32| {
                ScriptEntry::new(Capability::Act, format!("Answer: {label}"))
                    .question(&qid)
                    .round(round)
            };
            let rate = |text: &str, round: u32| {
                ScriptEntry::new(Capability::Eval, text.to_string()).question(&qid).round(round)
            };
            match i {
                0..=9 => e.push(grounded(LABELS[gold])),
                10..=13 => {
                    if k == 2 {
                        e.push(fixed(wrong(gold, 0), 1));
                    }
                    e.push(rate("Agent 1: 8\nAgent 2: 9\nAgent 3: 3", 1));
                    e.push(grounded(LABELS[gold]));
                }
                14..=17 => {
                    // round 1: agent1 right, agent2 and agent3 wrong; agent2 pruned
                    // round 2: agent1 right, agent3 wrong; agent3 pruned
                    if k == 1 {
                        e.push(fixed(wrong(gold, 0), 1));
                    }
                    if k == 2 {
                        e.push(fixed(wrong(gold, 1), 1));
                        e.push(fixed(wrong(gold, 1), 2));
                    }
                    e.push(rate("Agent 1: 8\nAgent 2: 2\nAgent 3: 6", 1));
                    e.push(rate("Agent 1: 9\nAgent 2: 4", 2));
                    e.push(grounded(LABELS[gold]));
                }
                18 => e.push(fixed(wrong(gold, 2), 1).round(1)),
                _ => {
                    // agent1 alone is right and gets out-voted
                    if k != 0 {
                        e.push(fixed(wrong(gold, 2), 2));
                    }
                    e.push(fixed(if k == 0 { LABELS[gold] } else { wrong(gold, 2) }, 1));
                    e.push(rate("Agent 1: 1\nAgent 2: 9\nAgent 3: 9", 1));
                }
            }
        }
    }
    let mut config = vidqa::config::RunConfig::default();
    config.similarity.synthetic.rules = rules;
    config.deliberation.seed = 7;
    let manifest = dir.join("manifest.json");
    let library = dir.join("library.json");
    std::fs::write(
        &manifest,
        serde_json::to_string_pretty(&serde_json::json!({ "questions": questions })).unwrap(),
    )
    .unwrap();
    let agents: Vec<serde_json::Value> = scripts
        .iter()
        .map(|s| {
            let mut v = serde_json::to_value(s).unwrap();
            v["kind"] = "scripted".into();
            v
        })
        .collect();
    std::fs::write(
        &library,
        serde_json::to_string_pretty(&serde_json::json!({ "agents": agents })).unwrap(),
    )
    .unwrap();
    E2eFixture {
        manifest,
        library,
        config,
        design,
    }
}
