//! Generated benchmark corpus: three entities, every (stance, sentiment)
//! cell filled equally for every target.
//!
//! Each text joins a tone clause, which never mentions anyone, to a stance
//! clause about the target. Because the tone clause is chosen independently
//! of the stance, sentiment carries no information about stance beyond the
//! balanced grid, which is what makes sentiment leakage measurable. Texts
//! alternate between English and Thai and rotate through each target's
//! aliases. The shipped `data/synthetic_corpus.jsonl` and `data/lexicon.json`
//! are the output of [`synthetic_corpus`] with the default cell size.

use crate::corpus::{BiasMarkers, Corpus, EntityEntry, Example, Lexicon, Provenance, Pronouns};
use crate::labels::{SentimentLabel, StanceLabel};

pub const DEFAULT_PER_CELL: usize = 10;

struct Figure {
    id: &'static str,
    canonical: &'static str,
    latin: [&'static str; 2],
    thai: [&'static str; 2],
    pronouns: [&'static str; 3],
    party: &'static str,
}

const FIGURES: [Figure; 3] = [
    Figure {
        id: "pita",
        canonical: "Pita",
        latin: ["Pita", "Pita Limjaroenrat"],
        thai: ["พิธา", "ทิม พิธา"],
        pronouns: ["he", "him", "his"],
        party: "Move Forward",
    },
    Figure {
        id: "thaksin",
        canonical: "Thaksin",
        latin: ["Thaksin", "Thaksin Shinawatra"],
        thai: ["ทักษิณ", "ทักษิณ ชินวัตร"],
        pronouns: ["he", "him", "his"],
        party: "Pheu Thai",
    },
    Figure {
        id: "paetongtarn",
        canonical: "Paetongtarn",
        latin: ["Paetongtarn", "Paetongtarn Shinawatra"],
        thai: ["แพทองธาร", "อุ๊งอิ๊ง"],
        pronouns: ["she", "her", "her"],
        party: "Pheu Thai",
    },
];

const TONE_EN: [[&str; 5]; 3] = [
    [
        "What a wonderful morning in Bangkok!",
        "I'm so happy with how the festival turned out.",
        "The new skytrain line is fantastic.",
        "Great news for farmers this season!",
        "Such a lovely crowd at the rally today.",
    ],
    [
        "Traffic in Bangkok is awful again.",
        "I'm angry about the flooding in my district.",
        "Prices keep rising and it's exhausting.",
        "The heat today is unbearable.",
        "What a terrible week for the economy.",
    ],
    [
        "Parliament meets again on Thursday.",
        "The committee released its schedule.",
        "Results will be announced next month.",
        "The debate starts at 8 pm.",
        "Reporters gathered outside the hall.",
    ],
];

const TONE_TH: [[&str; 5]; 3] = [
    [
        "วันนี้อากาศดีมาก มีความสุขจริงๆ",
        "ข่าวดีสำหรับเกษตรกรปีนี้",
        "รถไฟฟ้าสายใหม่ดีมาก",
        "งานเทศกาลสนุกมาก",
        "ดีใจที่ได้เห็นผู้คนมากมาย",
    ],
    [
        "รถติดมากอีกแล้ว น่าเบื่อ",
        "น้ำท่วมอีกแล้ว โกรธมาก",
        "ของแพงขึ้นทุกวัน เหนื่อยจริงๆ",
        "อากาศร้อนจนทนไม่ไหว",
        "สัปดาห์นี้แย่มากสำหรับเศรษฐกิจ",
    ],
    [
        "สภาจะประชุมอีกครั้งวันพฤหัสบดี",
        "คณะกรรมาธิการประกาศตารางแล้ว",
        "ผลจะประกาศเดือนหน้า",
        "การอภิปรายเริ่มสองทุ่ม",
        "ผู้สื่อข่าวรออยู่หน้าห้องประชุม",
    ],
];

// {A} alias, {he}/{him}/{his} pronoun slots.
const STANCE_EN: [[&str; 5]; 3] = [
    [
        "{A} has my vote, and I hope {he} wins.",
        "I back {A}; {his} plan makes sense.",
        "{A} should be prime minister.",
        "I stand with {A} on this.",
        "Keep going, {A}, we believe in {him}.",
    ],
    [
        "{A} is the wrong choice for the country.",
        "I will never vote for {A}.",
        "{A} should step aside; {his} policies failed.",
        "Nobody should trust {A} with this.",
        "I oppose {A} and everything {he} proposes.",
    ],
    [
        "{A} spoke to reporters after the session.",
        "{A} is scheduled to visit Chiang Mai.",
        "{A} met the committee this morning.",
        "Photos of {A} were shared online.",
        "{A} will travel north; {his} schedule was published.",
    ],
];

const STANCE_TH: [[&str; 5]; 3] = [
    [
        "สนับสนุน{A}เต็มที่",
        "{A}ควรเป็นนายกรัฐมนตรี",
        "เลือก{A}แน่นอน",
        "เชื่อมั่นใน{A}",
        "เป็นกำลังใจให้{A}",
    ],
    [
        "ไม่เอา{A}",
        "{A}ไม่เหมาะกับประเทศนี้",
        "จะไม่เลือก{A}เด็ดขาด",
        "ไม่ไว้ใจ{A}",
        "{A}ควรลาออก",
    ],
    [
        "{A}ให้สัมภาษณ์หลังประชุม",
        "{A}มีกำหนดลงพื้นที่เชียงใหม่",
        "{A}พบคณะกรรมการเมื่อเช้านี้",
        "มีภาพ{A}เผยแพร่ทางออนไลน์",
        "{A}เดินทางไปภาคเหนือ",
    ],
];

const RATIONALE_TONE_EN: [&str; 3] = ["upbeat", "gloomy", "matter-of-fact"];
const RATIONALE_STANCE_EN: [&str; 3] = ["backs", "opposes", "only reports on"];
const RATIONALE_TONE_TH: [&str; 3] = ["สดใส", "หดหู่", "เรียบๆ"];
const RATIONALE_STANCE_TH: [&str; 3] = ["ชื่นชม", "ต่อต้าน", "แค่รายงานข่าวของ"];

pub fn synthetic_lexicon() -> Lexicon {
    let entries = FIGURES
        .iter()
        .map(|f| EntityEntry {
            entity_id: f.id.to_string(),
            canonical: f.canonical.to_string(),
            aliases: f.latin.iter().chain(&f.thai).map(|s| s.to_string()).collect(),
            pronouns: Pronouns {
                subject: f.pronouns[0].to_string(),
                object: f.pronouns[1].to_string(),
                possessive: f.pronouns[2].to_string(),
            },
            party: Some(f.party.to_string()),
        })
        .collect();
    Lexicon::new(entries).expect("built-in lexicon is valid")
}

fn fill(template: &str, alias: &str, pronouns: &[&str; 3]) -> String {
    template
        .replace("{A}", alias)
        .replace("{he}", pronouns[0])
        .replace("{him}", pronouns[1])
        .replace("{his}", pronouns[2])
}

fn item(figure: &Figure, stance: StanceLabel, sentiment: SentimentLabel, k: usize, id: String) -> Example {
    let (s, m) = (stance.index(), sentiment.index());
    let thai = k % 2 == 1;
    let alias = if thai { figure.thai[(k / 2) % 2] } else { figure.latin[(k / 2) % 2] };
    // offsets keep tone and stance clauses from pairing up the same way in
    // every cell
    let tone_idx = (k + s) % 5;
    let stance_idx = (k + 2 * m) % 5;
    let mention = k % 4 < 2;
    let (text, rationale) = if thai {
        let who = if mention { alias } else { "นักการเมืองคนนี้" };
        (
            format!("{} {}", TONE_TH[m][tone_idx], fill(STANCE_TH[s][stance_idx], alias, &figure.pronouns)),
            format!("น้ำเสียง{} ผู้เขียน{}{}", RATIONALE_TONE_TH[m], RATIONALE_STANCE_TH[s], who),
        )
    } else {
        let who = if mention { alias } else { "the politician" };
        (
            format!("{} {}", TONE_EN[m][tone_idx], fill(STANCE_EN[s][stance_idx], alias, &figure.pronouns)),
            format!("Tone is {}; the author {} {}.", RATIONALE_TONE_EN[m], RATIONALE_STANCE_EN[s], who),
        )
    };
    let leaks = sentiment != SentimentLabel::Neutral && sentiment.mapped_stance() != stance;
    Example {
        id,
        text,
        target_id: figure.id.to_string(),
        stance,
        sentiment,
        rationale: Some(rationale),
        bias_markers: Some(BiasMarkers {
            sentiment_leakage: leaks,
            entity_bias: false,
        }),
        provenance: Provenance::Original,
        source_id: None,
        stance_unverified: false,
    }
}

/// `9 · per_cell` examples per entity, grouped by target, then stance, then
/// sentiment.
pub fn synthetic_corpus_with(per_cell: usize) -> Corpus {
    let mut examples = Vec::new();
    for figure in &FIGURES {
        let mut n = 0;
        for stance in StanceLabel::ALL {
            for sentiment in SentimentLabel::ALL {
                for k in 0..per_cell {
                    n += 1;
                    examples.push(item(figure, stance, sentiment, k, format!("{}_{n:03}", figure.id)));
                }
            }
        }
    }
    Corpus::new(examples, synthetic_lexicon()).expect("generated corpus is valid")
}

pub fn synthetic_corpus() -> Corpus {
    synthetic_corpus_with(DEFAULT_PER_CELL)
}
