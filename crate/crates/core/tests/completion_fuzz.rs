use proptest::prelude::*;

use dmd_core::gateway::parse_completion;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1024))]

    #[test]
    fn arbitrary_text_never_panics(raw in "\\PC{0,300}") {
        let c = parse_completion(&raw);
        prop_assert_eq!(c.raw, raw);
    }

    #[test]
    fn fenced_noise_never_panics(
        pre in "[a-z `\n]{0,40}",
        tag in prop::sample::select(vec!["skeleton", "requirements", "json", "", "SKELETON", "python"]),
        body in "[ -~\n]{0,120}",
        close in any::<bool>(),
    ) {
        let raw = format!("{pre}\n```{tag}\n{body}\n{}", if close { "```\n" } else { "" });
        let c = parse_completion(&raw);
        prop_assert!(!c.skeleton_text.starts_with("```"));
        for r in &c.requirements {
            prop_assert!(!r.name.trim().is_empty());
        }
    }

    #[test]
    fn skeleton_block_is_extracted_verbatim(eq in "d[a-z]{1,4}/dt = p0\\*[a-z]{1,4}") {
        let raw = format!("Answer:\n```skeleton\n{eq}\n```\n```requirements\n[\"P_e\"]\n```");
        let c = parse_completion(&raw);
        prop_assert_eq!(c.skeleton_text, eq);
        prop_assert_eq!(c.requirements.len(), 1);
    }
}
