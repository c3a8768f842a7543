//! Bundled experiment configs, usable by name in place of a config path.

const PRESETS: [(&str, &str); 5] = [
    ("cartpole-oc", include_str!("../presets/cartpole-oc.json")),
    ("cartpole-rl", include_str!("../presets/cartpole-rl.json")),
    ("lander-switch", include_str!("../presets/lander-switch.json")),
    ("arm-obstacle", include_str!("../presets/arm-obstacle.json")),
    ("lq-rate", include_str!("../presets/lq-rate.json")),
];

pub fn names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

pub fn get(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}
