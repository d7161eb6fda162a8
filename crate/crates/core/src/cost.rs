//! Evaluation and task-switching costs, and the running cost ledger.
//!
//! Every rule style is a first-match list of directed rules; the built-in
//! styles expand to fixed lists, `Custom` uses the configured ones.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::types::{CostAttributes, TaskSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleStyle {
    Hamster,
    OpenVla,
    MetaWorld,
    Custom,
}

impl std::str::FromStr for RuleStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "hamster" => Ok(RuleStyle::Hamster),
            "openvla" | "open_vla" => Ok(RuleStyle::OpenVla),
            "metaworld" | "meta_world" => Ok(RuleStyle::MetaWorld),
            "custom" => Ok(RuleStyle::Custom),
            _ => Err(Error::InvalidConfig(format!("unknown cost rule style '{s}'"))),
        }
    }
}

/// One attribute comparison between the source and destination task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    TaskTypeDiffers,
    TaskTypeSame,
    PrimaryObjectDiffers,
    PrimaryObjectSame,
    EmbodimentDiffers,
    EmbodimentSame,
}

impl Condition {
    pub fn holds(self, from: &CostAttributes, to: &CostAttributes) -> bool {
        match self {
            Condition::TaskTypeDiffers => from.task_type != to.task_type,
            Condition::TaskTypeSame => from.task_type == to.task_type,
            Condition::PrimaryObjectDiffers => from.primary_object != to.primary_object,
            Condition::PrimaryObjectSame => from.primary_object == to.primary_object,
            Condition::EmbodimentDiffers => from.embodiment != to.embodiment,
            Condition::EmbodimentSame => from.embodiment == to.embodiment,
        }
    }
}

/// Applies when every condition holds; an empty list matches any task change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchRule {
    #[serde(default)]
    pub when: Vec<Condition>,
    pub addition: f64,
}

impl SwitchRule {
    pub fn new(when: Vec<Condition>, addition: f64) -> Self {
        Self { when, addition }
    }

    pub fn matches(&self, from: &CostAttributes, to: &CostAttributes) -> bool {
        self.when.iter().all(|c| c.holds(from, to))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostConfig {
    pub eval_cost: f64,
    pub rule_style: RuleStyle,
    /// Only used by the `Custom` style.
    pub rules: Vec<SwitchRule>,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self::style(RuleStyle::Hamster)
    }
}

impl CostConfig {
    pub fn style(rule_style: RuleStyle) -> Self {
        Self {
            eval_cost: 0.5,
            rule_style,
            rules: Vec::new(),
        }
    }

    pub fn custom(rules: Vec<SwitchRule>) -> Self {
        Self {
            eval_cost: 0.5,
            rule_style: RuleStyle::Custom,
            rules,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eval_cost >= 0.0 && self.eval_cost.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "eval_cost must be finite and non-negative, got {}",
                self.eval_cost
            )));
        }
        if self.rule_style != RuleStyle::Custom && !self.rules.is_empty() {
            return Err(Error::InvalidConfig(
                "explicit switch rules require rule_style \"custom\"".into(),
            ));
        }
        if let Some(r) = self.rules.iter().find(|r| !(r.addition >= 0.0 && r.addition.is_finite())) {
            return Err(Error::InvalidConfig(format!(
                "switch rule additions must be finite and non-negative, got {}",
                r.addition
            )));
        }
        Ok(())
    }

    /// The ordered rule list this configuration evaluates.
    pub fn effective_rules(&self) -> Vec<SwitchRule> {
        use Condition::*;
        match self.rule_style {
            // A new task type needs new, often large, objects; any other change
            // within a type still means adding or removing objects.
            RuleStyle::Hamster => vec![SwitchRule::new(vec![TaskTypeDiffers], 2.0), SwitchRule::new(vec![], 1.0)],
            // Task change costs 1; a change of embodiment adds 3 on top.
            RuleStyle::OpenVla => vec![SwitchRule::new(vec![EmbodimentDiffers], 4.0), SwitchRule::new(vec![], 1.0)],
            RuleStyle::MetaWorld => vec![SwitchRule::new(vec![PrimaryObjectDiffers], 1.0)],
            RuleStyle::Custom => self.rules.clone(),
        }
    }
}

/// Cost of reconfiguring from `from` to `to`; moving to the same task is free.
pub fn switch_cost(from: &TaskSpec, to: &TaskSpec, cfg: &CostConfig) -> f64 {
    if from.id == to.id {
        return 0.0;
    }
    cfg.effective_rules()
        .iter()
        .find(|r| r.matches(&from.cost_attrs, &to.cost_attrs))
        .map_or(0.0, |r| r.addition)
}

/// Switch costs from `current` to every task, in task order.
pub fn switch_costs_from(current: &TaskSpec, tasks: &[TaskSpec], cfg: &CostConfig) -> Vec<f64> {
    tasks.iter().map(|t| switch_cost(current, t, cfg)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChargeKind {
    Eval,
    Switch,
}

impl ChargeKind {
    pub fn name(self) -> &'static str {
        match self {
            ChargeKind::Eval => "eval",
            ChargeKind::Switch => "switch",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub step: u64,
    pub kind: ChargeKind,
    pub amount: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from_task: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to_task: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    total: f64,
    entries: Vec<LedgerEntry>,
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn charge(&mut self, entry: LedgerEntry) -> Result<()> {
        if !(entry.amount >= 0.0 && entry.amount.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "charges must be finite and non-negative, got {}",
                entry.amount
            )));
        }
        self.total += entry.amount;
        self.entries.push(entry);
        Ok(())
    }

    pub fn charge_eval(&mut self, step: u64, amount: f64, task: &str) -> Result<()> {
        self.charge(LedgerEntry {
            step,
            kind: ChargeKind::Eval,
            amount,
            from_task: None,
            to_task: Some(task.to_owned()),
        })
    }

    pub fn charge_switch(&mut self, step: u64, amount: f64, from: &str, to: &str) -> Result<()> {
        self.charge(LedgerEntry {
            step,
            kind: ChargeKind::Switch,
            amount,
            from_task: Some(from.to_owned()),
            to_task: Some(to.to_owned()),
        })
    }

    pub fn sum_of(&self, kind: ChargeKind) -> f64 {
        self.entries.iter().filter(|e| e.kind == kind).map(|e| e.amount).sum()
    }

    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "kind", "amount", "from", "to"])?;
        for e in &self.entries {
            w.write_record([
                e.step.to_string(),
                e.kind.name().to_owned(),
                e.amount.to_string(),
                e.from_task.clone().unwrap_or_default(),
                e.to_task.clone().unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        write_atomic(path, &buf)
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn task(id: &str, ty: &str, obj: &str, emb: &str) -> TaskSpec {
        TaskSpec {
            id: id.into(),
            index: 0,
            description: format!("do {id}"),
            verb_phrase: String::new(),
            embedding: vec![],
            cost_attrs: CostAttributes::new(ty, obj, emb),
        }
    }

    #[test]
    fn openvla_rules() {
        let cfg = CostConfig::style(RuleStyle::OpenVla);
        let a = task("a", "pick", "cup", "bridge");
        let b = task("b", "pick", "cup", "bridge");
        let c = task("c", "pick", "cup", "google_robot");
        assert_eq!(switch_cost(&a, &a, &cfg), 0.0);
        assert_eq!(switch_cost(&a, &b, &cfg), 1.0);
        assert_eq!(switch_cost(&a, &c, &cfg), 4.0);
    }

    #[test]
    fn hamster_rules() {
        let cfg = CostConfig::style(RuleStyle::Hamster);
        let a = task("a", "pick_place", "cup", "default");
        let b = task("b", "pick_place", "bowl", "default");
        let c = task("c", "press_button", "button", "default");
        assert_eq!(switch_cost(&a, &b, &cfg), 1.0);
        assert_eq!(switch_cost(&a, &c, &cfg), 2.0);
    }

    #[test]
    fn metaworld_rules() {
        let cfg = CostConfig::style(RuleStyle::MetaWorld);
        let a = task("drawer-open", "open", "drawer", "default");
        let b = task("drawer-close", "close", "drawer", "default");
        let c = task("window-open", "open", "window", "default");
        assert_eq!(switch_cost(&a, &b, &cfg), 0.0);
        assert_eq!(switch_cost(&a, &c, &cfg), 1.0);
    }

    #[test]
    fn custom_rules_use_first_match() {
        let cfg = CostConfig::custom(vec![
            SwitchRule::new(vec![Condition::EmbodimentDiffers, Condition::TaskTypeDiffers], 7.0),
            SwitchRule::new(vec![Condition::EmbodimentDiffers], 5.0),
        ]);
        cfg.validate().unwrap();
        let a = task("a", "x", "o", "e1");
        assert_eq!(switch_cost(&a, &task("b", "y", "o", "e2"), &cfg), 7.0);
        assert_eq!(switch_cost(&a, &task("c", "x", "o", "e2"), &cfg), 5.0);
        assert_eq!(switch_cost(&a, &task("d", "x", "o", "e1"), &cfg), 0.0);
    }

    #[test]
    fn config_validation_and_json() {
        let mut cfg = CostConfig::style(RuleStyle::Hamster);
        cfg.rules.push(SwitchRule::new(vec![], 1.0));
        assert!(cfg.validate().is_err());
        let cfg: CostConfig =
            serde_json::from_str(r#"{"rule_style":"custom","rules":[{"when":["primary_object_differs"],"addition":1.5}]}"#)
                .unwrap();
        assert_eq!(cfg.eval_cost, 0.5);
        assert_eq!(cfg.rules[0].when, vec![Condition::PrimaryObjectDiffers]);
        let neg = CostConfig {
            eval_cost: -0.5,
            ..CostConfig::default()
        };
        assert!(neg.validate().is_err());
    }

    #[test]
    fn ledger_arithmetic() {
        let mut l = CostLedger::new();
        for _ in 0..3 {
            l.charge_eval(1, 0.5, "t").unwrap();
        }
        assert_eq!(l.total(), 1.5);
        l.charge_switch(1, 0.0, "t", "u").unwrap();
        assert_eq!(l.total(), 1.5);
        assert_eq!(l.entries().len(), 4);
        assert!(l.charge_eval(2, -1.0, "t").is_err());

        let mut warm = CostLedger::new();
        for _ in 0..10 {
            warm.charge_eval(0, 3.0 * 0.5, "t").unwrap();
        }
        assert_eq!(warm.total(), 15.0);
    }

    #[test]
    fn ledger_csv_columns() {
        let mut l = CostLedger::new();
        l.charge_eval(0, 1.5, "t0").unwrap();
        l.charge_switch(1, 2.0, "t0", "t1").unwrap();
        let mut buf = Vec::new();
        l.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "step,kind,amount,from,to\n0,eval,1.5,,t0\n1,switch,2,t0,t1\n");
    }

    fn arb_attrs() -> impl Strategy<Value = CostAttributes> {
        (0..3u8, 0..3u8, 0..2u8).prop_map(|(a, b, c)| CostAttributes::new(format!("t{a}"), format!("o{b}"), format!("e{c}")))
    }

    proptest! {
        #[test]
        fn self_switch_is_free(attrs in arb_attrs()) {
            let t = TaskSpec { cost_attrs: attrs, ..task("x", "a", "b", "c") };
            for style in [RuleStyle::Hamster, RuleStyle::OpenVla, RuleStyle::MetaWorld] {
                prop_assert_eq!(switch_cost(&t, &t, &CostConfig::style(style)), 0.0);
            }
        }

        #[test]
        fn ledger_total_is_sum_of_entries(amounts in prop::collection::vec(0u32..20, 0..60)) {
            let mut l = CostLedger::new();
            for (k, a) in amounts.iter().enumerate() {
                let amount = f64::from(*a) * 0.5;
                if k % 3 == 0 {
                    l.charge_switch(k as u64, amount, "a", "b").unwrap();
                } else {
                    l.charge_eval(k as u64, amount, "a").unwrap();
                }
            }
            let sum: f64 = l.entries().iter().map(|e| e.amount).sum();
            prop_assert_eq!(l.total(), sum);
            prop_assert_eq!(l.total(), l.sum_of(ChargeKind::Eval) + l.sum_of(ChargeKind::Switch));
        }
    }
}
