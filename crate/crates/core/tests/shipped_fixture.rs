//! Walkthrough checks of the shipped simulated marketplace fixture.

mod common;

use ata_core::browser::{
    BrowserCommand, CommandStatus, CommandTarget, DriverError, ElementRole, Environment, Fixture,
    FixtureRegistry,
};

fn environment() -> Environment {
    let raw = std::fs::read_to_string(common::classified_fixture_path()).unwrap();
    let mut registry = FixtureRegistry::new();
    registry.register(Fixture::parse(&raw).unwrap());
    Environment::Simulator(registry)
}

#[test]
fn home_observation_offers_the_login_link() {
    let environment = environment();
    let mut driver = environment.reset("classified-sim").unwrap();
    let observation = driver.observe().unwrap();
    assert!(observation
        .elements
        .iter()
        .any(|e| e.text == "Login" && e.role == ElementRole::Link));
    assert_eq!(observation.elements.len(), 13);
    assert!(observation.mark_tokens_resolve());
    // Pure read: observing again changes nothing.
    assert_eq!(observation, driver.observe().unwrap());
}

#[test]
fn clicking_login_lands_on_the_login_page() {
    let environment = environment();
    let mut driver = environment.reset("classified-sim").unwrap();
    // Login is the 7th element in document order.
    let result = driver
        .execute(&BrowserCommand::click(CommandTarget::Mark(7)))
        .unwrap();
    assert_eq!(result.status, CommandStatus::Ok);
    assert_eq!(driver.observe().unwrap().title, "Login - Classified");
}

#[test]
fn reset_restores_the_pristine_initial_state() {
    let environment = environment();
    let mut driver = environment.reset("classified-sim").unwrap();
    let pristine = driver.observe().unwrap().state_hash();

    // Five commands deep into the flow.
    let commands = [
        BrowserCommand::click(CommandTarget::Mark(7)),
        BrowserCommand::type_text(CommandTarget::Mark(2), "blake.sullivan@gmail.com"),
        BrowserCommand::type_text(CommandTarget::Mark(3), "Password.123"),
        BrowserCommand::click(CommandTarget::Mark(5)),
        BrowserCommand::type_text(CommandTarget::Mark(4), "sofa"),
    ];
    for command in &commands {
        assert_eq!(driver.execute(command).unwrap().status, CommandStatus::Ok);
    }
    assert_ne!(driver.observe().unwrap().state_hash(), pristine);

    let mut fresh = environment.reset("classified-sim").unwrap();
    assert_eq!(fresh.observe().unwrap().state_hash(), pristine);
}

#[test]
fn unknown_app_id_is_rejected() {
    let environment = environment();
    match environment.reset("nope") {
        Err(DriverError::UnknownApp(app)) => assert_eq!(app, "nope"),
        Err(other) => panic!("expected unknown-app error, got {other}"),
        Ok(_) => panic!("expected unknown-app error, got a session"),
    }
}

#[test]
fn full_passing_flow_reaches_the_commented_listing() {
    let environment = environment();
    let mut driver = environment.reset("classified-sim").unwrap();
    let flow = [
        BrowserCommand::click(CommandTarget::Mark(7)), // Login link
        BrowserCommand::type_text(CommandTarget::Mark(2), "blake.sullivan@gmail.com"),
        BrowserCommand::type_text(CommandTarget::Mark(3), "Password.123"),
        BrowserCommand::click(CommandTarget::Mark(5)), // Log in
        BrowserCommand::type_text(CommandTarget::Mark(4), "sofa"),
        BrowserCommand::press_enter(),
        BrowserCommand::click(CommandTarget::Mark(3)), // Blue sofa listing
        BrowserCommand::type_text(CommandTarget::Mark(2), "Great sofa, is it still available?"),
        BrowserCommand::click(CommandTarget::Mark(3)), // Send comment
    ];
    for command in &flow {
        let result = driver.execute(command).unwrap();
        assert_eq!(
            result.status,
            CommandStatus::Ok,
            "{command:?}: {}",
            result.note
        );
    }
    let observation = driver.observe().unwrap();
    assert_eq!(observation.title, "Blue sofa - 120 EUR - Classified");
    match &observation.screenshot {
        ata_core::browser::ScreenshotArtifact::TextRender(text) => {
            assert!(text.contains("Comments (1)"), "comment must be visible");
        }
        _ => panic!("simulator renders text"),
    }
    // The listing page has no Cancel button anywhere.
    assert!(!observation
        .elements
        .iter()
        .any(|e| e.text.contains("Cancel")));
}

#[test]
fn overlay_states_are_flagged_in_the_rendering() {
    let fixture = "fixture: overlay-demo\nstart: base\nstate: base\n  title: Base\n  url: https://o.example/\n  element: open_btn button \"Open popup\"\nstate: popup\n  title: Popup\n  url: https://o.example/popup\n  overlay: true\n  element: close_btn button \"Close\"\ntransition: base click open_btn => popup\n";
    let mut registry = FixtureRegistry::new();
    registry.register(Fixture::parse(fixture).unwrap());
    let environment = Environment::Simulator(registry);
    let mut driver = environment.reset("overlay-demo").unwrap();
    driver
        .execute(&BrowserCommand::click(CommandTarget::Mark(1)))
        .unwrap();
    match &driver.observe().unwrap().screenshot {
        ata_core::browser::ScreenshotArtifact::TextRender(text) => {
            assert!(text.contains("OVERLAY PAGE"));
        }
        _ => panic!("simulator renders text"),
    }
}
