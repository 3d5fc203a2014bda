mod common;

use proptest::prelude::*;

use courseware::gateway::{Gateway, MockScript, ScriptEntry, ScriptedFailure};
use courseware::knowledge::{
    select_theme, GradeLevel, ProceduralConcept, StructuredKnowledge, SubjectArea,
};
use courseware::pipeline::{
    emergency_template, run_pipeline, validate_stage1, validate_stage2, validate_well_formed,
    DegradationLevel, BASIC_STYLE_MARKER,
};

#[test]
fn every_cell_of_the_grid_lands_on_its_rung() {
    let k = common::physics();
    let theme = select_theme(k.subject_area);
    for s1 in [true, false] {
        for s2 in [true, false] {
            for sp in [true, false] {
                let (gw, mock) = Gateway::mock(common::ladder_script(s1, s2, sp));
                let out = run_pipeline(&k, &gw);
                let (level, calls) = common::ladder_expectation(s1, s2, sp);
                let cell = format!("stage1={s1} stage2={s2} single={sp}");
                assert_eq!(out.level, level, "{cell}");
                assert_eq!(mock.call_count(), calls, "{cell}");
                assert!(validate_well_formed(&out.html).well_formed, "{cell}");
                match level {
                    DegradationLevel::Full => {
                        assert!(validate_stage1(&out.html).passed());
                        assert!(validate_stage2(&out.html, &theme).passed());
                    }
                    DegradationLevel::BasicStyle => {
                        assert!(out.html.contains(BASIC_STYLE_MARKER));
                        assert!(out.html.contains(&theme.primary_color.to_string()));
                        assert_eq!((out.stage1_attempts, out.stage2_attempts), (1, 2));
                    }
                    DegradationLevel::SinglePass => {
                        assert_eq!((out.stage1_attempts, out.single_pass_attempts), (3, 1))
                    }
                    DegradationLevel::Emergency => assert_eq!(out.html, emergency_template(&k)),
                }
            }
        }
    }
}

#[test]
fn gateway_outage_ends_in_emergency() {
    let (gw, _) = Gateway::mock(MockScript::new(vec![ScriptEntry::fail(
        ScriptedFailure::Timeout,
    )
    .repeating()]));
    let out = run_pipeline(&common::physics(), &gw);
    assert_eq!(out.level, DegradationLevel::Emergency);
    assert!(!out.gateway_errors.is_empty());
    assert!(validate_well_formed(&out.html).well_formed);
}

fn hostile_text() -> impl Strategy<Value = String> {
    prop_oneof![
        ".{0,40}",
        prop::sample::select(vec![
            "</body>",
            "<script>alert(1)</script>",
            "&amp;&",
            "\"'><",
            "<!--",
            "]]>",
            "<div",
            "\u{0}"
        ])
        .prop_map(String::from),
    ]
}

fn knowledge() -> impl Strategy<Value = StructuredKnowledge> {
    let list = || prop::collection::vec(hostile_text(), 0..5);
    (
        prop::collection::vec(hostile_text(), 0..6),
        list(),
        list(),
        list(),
        prop::collection::vec((hostile_text(), list()), 0..3),
        prop::sample::select(SubjectArea::ALL.to_vec()),
        prop::sample::select(vec![
            GradeLevel::Primary,
            GradeLevel::Middle,
            GradeLevel::High,
            GradeLevel::Undergraduate,
            GradeLevel::Graduate,
        ]),
    )
        .prop_map(
            |(
                main_topics,
                key_concepts,
                learning_objectives,
                prerequisite_knowledge,
                procs,
                subject_area,
                grade_level,
            )| StructuredKnowledge {
                main_topics,
                key_concepts,
                learning_objectives,
                prerequisite_knowledge,
                procedural_concepts: procs
                    .into_iter()
                    .map(|(name, steps)| ProceduralConcept {
                        name,
                        steps,
                        parameters: vec![],
                    })
                    .collect(),
                subject_area,
                grade_level,
            },
        )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn emergency_page_is_well_formed_for_any_knowledge(k in knowledge()) {
        let html = emergency_template(&k);
        let report = validate_well_formed(&html);
        prop_assert!(report.well_formed, "{:?}\n{}", report.errors, html);
        prop_assert!(!html.contains("<script>alert"));
    }

    #[test]
    fn basic_styling_keeps_markup_well_formed(k in knowledge()) {
        let styled = courseware::pipeline::apply_basic_styling(common::GOOD_STAGE1, &select_theme(k.subject_area));
        prop_assert!(validate_stage1(&styled).passed());
        prop_assert!(validate_stage2(&styled, &select_theme(k.subject_area)).passed());
    }
}
