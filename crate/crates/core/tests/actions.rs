mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tapwise::action::{parse_action, render_action_reference, Action, ActionKind, Direction, Distance, ParseErrorKind};
use tapwise::device::{lower_action, GestureKind, LONG_PRESS_MS, SWIPE_MS};
use tapwise::ui_model::{Bounds, ElementRegistry, UiElement};

use common::{brute_force_swipe, random_action};

fn arb_action() -> impl Strategy<Value = Action> {
    let element = prop_oneof![1u32..500, Just(u32::MAX)];
    let direction = prop_oneof![Just(Direction::Up), Just(Direction::Down), Just(Direction::Left), Just(Direction::Right)];
    let dist = prop_oneof![Just(Distance::Short), Just(Distance::Medium), Just(Distance::Long)];
    prop_oneof![
        element.clone().prop_map(|element| Action::Tap { element }),
        element.clone().prop_map(|element| Action::LongPress { element }),
        (element, direction, dist).prop_map(|(element, direction, dist)| Action::Swipe { element, direction, dist }),
        "[^\r\n]{0,40}".prop_map(|text| Action::Text { text }),
        Just(Action::Back),
        Just(Action::Exit),
    ]
}

proptest! {
    #[test]
    fn render_then_parse_is_identity(a in arb_action()) {
        prop_assert_eq!(parse_action(&a.to_string()), Ok(a));
    }

    #[test]
    fn parse_survives_arbitrary_text(s in "\\PC{0,80}") {
        let _ = parse_action(&s);
    }

    #[test]
    fn embedded_action_is_found(a in arb_action(), before in "[a-z .]{0,20}", after in "[ .]{0,20}") {
        let src = format!("{before} {a}{after}");
        prop_assert_eq!(parse_action(&src), Ok(a));
    }
}

#[test]
fn seeded_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..2000 {
        let a = random_action(&mut rng);
        assert_eq!(parse_action(&a.to_string()), Ok(a.clone()), "{a}");
    }
}

#[test]
fn unknown_function_names_are_not_actions() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..500 {
        let len = rng.random_range(1..10);
        let name: String = (0..len).map(|_| rng.random_range(b'a'..=b'z') as char).collect();
        if ActionKind::parse(&name).is_some() {
            continue;
        }
        let err = parse_action(&format!("{name}(1)")).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::NoActionFound, "{name}");
    }
}

#[test]
fn diagnostics() {
    let cases = [
        ("tap()", ParseErrorKind::ArityMismatch),
        ("tap(0)", ParseErrorKind::BadElementLiteral),
        ("tap(\"3\")", ParseErrorKind::BadElementLiteral),
        ("swipe(3, \"sideways\", \"short\")", ParseErrorKind::BadEnumValue),
        ("swipe(3, \"up\", \"far\")", ParseErrorKind::BadEnumValue),
        ("text(hello)", ParseErrorKind::BadEnumValue),
        ("I am done.", ParseErrorKind::NoActionFound),
    ];
    for (src, kind) in cases {
        assert_eq!(parse_action(src).unwrap_err().kind, kind, "{src}");
    }
}

#[test]
fn reference_lists_all_six_actions_with_examples() {
    let r = render_action_reference();
    for example in ["tap(5)", "long_press(5)", "swipe(21, \"up\", \"medium\")", "text(\"Hello, world!\")", "back()", "exit()"] {
        assert!(r.contains(&format!("Example: {example}")), "{example}");
        assert!(parse_action(example).is_ok());
    }
}

fn one_element(bounds: Bounds, screen: (u32, u32)) -> ElementRegistry {
    ElementRegistry {
        elements: vec![UiElement {
            identifier: "e".into(),
            label: 1,
            bounds,
            class_name: "android.view.View".into(),
            text_content: String::new(),
            clickable: true,
            long_clickable: false,
            editable: false,
        }],
        screen_size: screen,
        source_hash: String::new(),
    }
}

#[test]
fn gestures_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..500 {
        let screen = (rng.random_range(100..2000), rng.random_range(100..3000));
        let l = rng.random_range(0..screen.0 as i32 - 1);
        let t = rng.random_range(0..screen.1 as i32 - 1);
        let bounds = Bounds::new(l, t, rng.random_range(l + 1..=screen.0 as i32), rng.random_range(t + 1..=screen.1 as i32));
        let direction = [Direction::Up, Direction::Down, Direction::Left, Direction::Right][rng.random_range(0..4)];
        let dist = [Distance::Short, Distance::Medium, Distance::Long][rng.random_range(0..3)];
        let reg = one_element(bounds, screen);

        let g = lower_action(&Action::Swipe { element: 1, direction, dist }, &reg).unwrap().unwrap();
        let (start, end) = brute_force_swipe(bounds, screen, direction, dist);
        assert_eq!((g.start, g.end), (start, end), "{bounds} on {screen:?} {direction:?} {dist:?}");
        assert_eq!((g.kind, g.duration_ms), (GestureKind::Swipe, SWIPE_MS));

        let tap = lower_action(&Action::Tap { element: 1 }, &reg).unwrap().unwrap();
        assert_eq!((tap.kind, tap.start, tap.end), (GestureKind::Tap, start, start));
        let press = lower_action(&Action::LongPress { element: 1 }, &reg).unwrap().unwrap();
        assert_eq!((press.start, press.duration_ms), (start, LONG_PRESS_MS));
    }
}

#[test]
fn non_spatial_gestures() {
    let reg = one_element(Bounds::new(0, 0, 10, 10), (100, 100));
    assert_eq!(lower_action(&Action::Exit, &reg).unwrap(), None);
    assert_eq!(lower_action(&Action::Back, &reg).unwrap().unwrap().kind, GestureKind::KeyBack);
    let t = lower_action(&Action::Text { text: "hi".into() }, &reg).unwrap().unwrap();
    assert_eq!((t.kind, t.text.as_deref()), (GestureKind::TextInput, Some("hi")));
    assert!(lower_action(&Action::Tap { element: 2 }, &reg).is_err());
}
