//! Golden tests for the four component prompts. The goldens were produced
//! once, reviewed by hand for section order and content, and frozen; set
//! BLESS=1 to regenerate after an intentional template change.

mod common;

use std::fs;
use std::path::{Path, PathBuf};

use ata_core::browser::{annotate_marks, Environment, Fixture, FixtureRegistry, MarkedObservation};
use ata_core::llm::canonical_request_text;
use ata_core::pinata::{
    build_actor_prompt, build_assertor_prompt, build_judge_prompt, ActorFeedback, ActorOutcome,
    MemoryKind, MemoryStore, OrchestratorConfig,
};
use ata_core::seeact::{build_prompt, LETTER_BUDGET};
use ata_core::templates::SEEACT_TEMPLATE_V1;
use ata_core::testcase::TestCase;

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/golden")
}

fn check_golden(name: &str, actual: &str) {
    let path = golden_dir().join(name);
    if std::env::var("BLESS").is_ok() {
        fs::create_dir_all(golden_dir()).unwrap();
        fs::write(&path, actual).unwrap();
    }
    let expected = fs::read_to_string(&path)
        .unwrap_or_else(|_| panic!("golden {name} missing; run with BLESS=1 to create"));
    assert_eq!(
        actual, expected,
        "{name} drifted from its golden; BLESS=1 to accept"
    );
}

fn home_marked() -> MarkedObservation {
    let raw = fs::read_to_string(common::classified_fixture_path()).unwrap();
    let mut registry = FixtureRegistry::new();
    registry.register(Fixture::parse(&raw).unwrap());
    let environment = Environment::Simulator(registry);
    let mut driver = environment.reset("classified-sim").unwrap();
    let observation = driver.observe().unwrap();
    annotate_marks(&observation)
}

fn fig1_analog_case() -> TestCase {
    common::load_sample_suite()
        .cases
        .into_iter()
        .find(|case| case.id == "cls-001-pass")
        .unwrap()
}

#[test]
fn seeact_prompt_matches_golden_byte_for_byte() {
    let marked = home_marked();
    let bundle = build_prompt(
        &fig1_analog_case(),
        &[],
        &marked,
        SEEACT_TEMPLATE_V1,
        "gpt-4o",
    )
    .unwrap();
    check_golden(
        "seeact_prompt_cls001_home.txt",
        &canonical_request_text(&bundle.request),
    );
}

#[test]
fn seeact_prompt_sections_are_in_order() {
    let marked = home_marked();
    let bundle = build_prompt(
        &fig1_analog_case(),
        &[],
        &marked,
        SEEACT_TEMPLATE_V1,
        "gpt-4o",
    )
    .unwrap();
    let text = canonical_request_text(&bundle.request);
    let sections = [
        "[CURRENT WEBPAGE IDENTIFICATION]",
        "[PREVIOUS ACTION ANALYSIS]",
        "[TEST CASE PROGRESS]",
        "[Screenshot Details Analysis]",
        "[TEST STEP ASSERTION CONTROL]",
        "[NEXT ACTION BASED ON WEBPAGE AND ANALYSIS]",
        "[MULTICHOICE QUESTION]",
        "[FINAL ANSWER]",
    ];
    let mut last = 0;
    for section in sections {
        let at = text[last..]
            .find(section)
            .unwrap_or_else(|| panic!("section {section} missing or out of order"));
        last += at + section.len();
    }
}

#[test]
fn seeact_multichoice_ends_with_the_none_option() {
    let marked = home_marked();
    let bundle = build_prompt(
        &fig1_analog_case(),
        &[],
        &marked,
        SEEACT_TEMPLATE_V1,
        "gpt-4o",
    )
    .unwrap();
    // The shipped home page has 13 elements, so the none-option is N.
    assert_eq!(bundle.none_letter, 'N');
    let text = canonical_request_text(&bundle.request);
    assert!(
        text.contains("\nN. None of the other options match the correct element\n\n[FINAL ANSWER]"),
        "multichoice must terminate with the none-option line"
    );
}

#[test]
fn seeact_prompt_with_empty_history_says_none() {
    let marked = home_marked();
    let bundle = build_prompt(
        &fig1_analog_case(),
        &[],
        &marked,
        SEEACT_TEMPLATE_V1,
        "gpt-4o",
    )
    .unwrap();
    let text = canonical_request_text(&bundle.request);
    assert!(text.contains("Previous Actions:\nNone\n"));
}

#[test]
fn seeact_letter_budget_drops_overflow_elements() {
    use ata_core::browser::{
        BBox, ElementDescriptor, ElementRole, PageObservation, ScreenshotArtifact,
    };
    let elements: Vec<ElementDescriptor> = (0..30)
        .map(|i| ElementDescriptor {
            mark_id: i + 1,
            role: ElementRole::Link,
            text: format!("link {}", i + 1),
            attributes: Default::default(),
            bbox: BBox {
                x: 0,
                y: 40 * (i + 1),
                width: 100,
                height: 28,
            },
        })
        .collect();
    let observation = PageObservation {
        url: "u".into(),
        title: "t".into(),
        dom_snapshot: String::new(),
        elements,
        screenshot: ScreenshotArtifact::TextRender("PAGE: t\nELEMENTS:\n".into()),
    };
    let marked = annotate_marks(&observation);
    let bundle = build_prompt(
        &fig1_analog_case(),
        &[],
        &marked,
        SEEACT_TEMPLATE_V1,
        "gpt-4o",
    )
    .unwrap();
    assert_eq!(bundle.letter_marks.len(), LETTER_BUDGET);
    assert_eq!(bundle.dropped_elements, 5);
    assert_eq!(bundle.none_letter, 'Z');
    let text = canonical_request_text(&bundle.request);
    assert!(text.contains("Z. None of the other options match the correct element"));
    assert!(text.contains("Y. <a>link 25</a>"));
    // The page rendering still shows every element; only the multichoice
    // is capped, so no choice line may offer link 26.
    assert!(
        !text.contains(". <a>link 26</a>"),
        "dropped elements must not be offered as choices"
    );
}

#[test]
fn pinata_actor_prompt_matches_golden() {
    let marked = home_marked();
    let memory = MemoryStore::new();
    let config = OrchestratorConfig::new("gpt-4o");
    let prompt = build_actor_prompt(
        1,
        "Start on the homepage of the Classified application.",
        &memory,
        &marked,
        &config,
    )
    .unwrap();
    check_golden("pinata_actor_step1.txt", &prompt);
}

#[test]
fn pinata_judge_prompt_matches_golden() {
    let marked = home_marked();
    let config = OrchestratorConfig::new("gpt-4o");
    let feedback = ActorFeedback {
        outcome: ActorOutcome::Executed,
        command: None,
        narration: "attempted `Start on the homepage`: NOOP -> OK (no-op)".to_string(),
    };
    let prompt = build_judge_prompt(
        "Start on the homepage of the Classified application.",
        &feedback,
        &marked.observation,
        &marked.observation,
        &config,
    )
    .unwrap();
    check_golden("pinata_judge_step1.txt", &prompt);
}

#[test]
fn pinata_assertor_prompt_matches_golden_and_is_screenshot_only() {
    let marked = home_marked();
    let mut memory = MemoryStore::new();
    memory.append(1, MemoryKind::Action, "no-op on the homepage");
    let config = OrchestratorConfig::new("gpt-4o");
    let prompt = build_assertor_prompt(
        1,
        "Homepage is displayed with a search bar, a category list and a Login link.",
        &marked.observation,
        &memory,
        &config,
    )
    .unwrap();
    assert!(
        !prompt.contains("[1]"),
        "assertor prompt must not carry set-of-marks tokens"
    );
    check_golden("pinata_assertor_step1.txt", &prompt);
}

#[test]
fn image_screenshots_ride_as_an_attachment_part() {
    use ata_core::browser::{
        BBox, ElementDescriptor, ElementRole, PageObservation, ScreenshotArtifact,
    };
    use ata_core::llm::ContentPart;

    // A 1x1 PNG; content is irrelevant, only the part plumbing matters.
    let mut png = Vec::new();
    image::DynamicImage::ImageRgba8(image::RgbaImage::new(4, 4))
        .write_to(&mut std::io::Cursor::new(&mut png), image::ImageFormat::Png)
        .unwrap();
    let observation = PageObservation {
        url: "https://img.example/".into(),
        title: "Img".into(),
        dom_snapshot: String::new(),
        elements: vec![ElementDescriptor {
            mark_id: 1,
            role: ElementRole::Button,
            text: "Go".into(),
            attributes: Default::default(),
            bbox: BBox {
                x: 0,
                y: 0,
                width: 4,
                height: 4,
            },
        }],
        screenshot: ScreenshotArtifact::Image(png),
    };
    let marked = annotate_marks(&observation);
    let bundle = build_prompt(
        &fig1_analog_case(),
        &[],
        &marked,
        SEEACT_TEMPLATE_V1,
        "gpt-4o",
    )
    .unwrap();
    let parts = &bundle.request.messages[0].parts;
    assert_eq!(parts.len(), 3, "text, image attachment, text");
    assert!(
        matches!(&parts[0], ContentPart::Text { text } if text.contains("screenshot attached"))
    );
    assert!(
        matches!(&parts[1], ContentPart::Image { media_type, .. } if media_type == "image/png")
    );
    assert!(
        matches!(&parts[2], ContentPart::Text { text } if text.contains("[MULTICHOICE QUESTION]"))
    );
}

#[test]
fn all_component_prompts_start_with_the_shared_profile() {
    let marked = home_marked();
    let memory = MemoryStore::new();
    let config = OrchestratorConfig::new("gpt-4o");
    let actor = build_actor_prompt(1, "act", &memory, &marked, &config).unwrap();
    let feedback = ActorFeedback {
        outcome: ActorOutcome::Executed,
        command: None,
        narration: "n".to_string(),
    };
    let judge = build_judge_prompt(
        "act",
        &feedback,
        &marked.observation,
        &marked.observation,
        &config,
    )
    .unwrap();
    let assertor =
        build_assertor_prompt(1, "assert", &marked.observation, &memory, &config).unwrap();
    for prompt in [&actor, &judge, &assertor] {
        assert!(prompt.starts_with(ata_core::templates::MULTI_AGENT_PROFILE));
        assert!(prompt.lines().nth(1).unwrap().starts_with("You are the "));
    }
}
