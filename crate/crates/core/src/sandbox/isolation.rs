use std::path::Path;

use super::SandboxError;

pub const SUBMISSIONS_PLACEHOLDER: &str = "SUBMISSIONS";
pub const EVALUATE_PLACEHOLDER: &str = "EVALUATE";

/// Built-in isolation for hosts without a container runtime.
///
/// Runs the command in new user, mount, pid and network namespaces, chrooted
/// into a tmpfs that holds read-only binds of the system directories, a
/// private `/tmp` and `/dev/shm`, a handful of device nodes, and the
/// workspace mounted read-write at `/submissions`.
/// The jail root is mounted on `.codeval/jail` inside the workspace, so
/// nothing is created elsewhere on the host.
/// Needs util-linux `unshare` and unprivileged user namespaces.
pub const NAMESPACE_JAIL_TEMPLATE: &str = concat!(
    "unshare --user --map-root-user --mount --pid --net --fork --kill-child -- ",
    "sh -c 'set -e; J=\"$1/.codeval/jail\"; mkdir -p \"$J\"; mount -t tmpfs codeval \"$J\"; ",
    "for d in bin sbin lib lib32 lib64 libx32 usr etc opt; do ",
    "[ -e \"/$d\" ] || continue; ",
    "if [ -L \"/$d\" ]; then ln -s \"$(readlink \"/$d\")\" \"$J/$d\"; ",
    "else mkdir \"$J/$d\"; mount --rbind \"/$d\" \"$J/$d\"; mount -o remount,bind,ro \"$J/$d\"; fi; ",
    "done; ",
    "mkdir -p \"$J/submissions\" \"$J/tmp\" \"$J/dev\" \"$J/proc\"; ",
    "mount --bind \"$1\" \"$J/submissions\"; ",
    "for n in null zero full random urandom tty; do ",
    "[ -e \"/dev/$n\" ] || continue; touch \"$J/dev/$n\"; mount --bind \"/dev/$n\" \"$J/dev/$n\"; done; ",
    "ln -s /proc/self/fd \"$J/dev/fd\"; ln -s fd/0 \"$J/dev/stdin\"; ln -s fd/1 \"$J/dev/stdout\"; ln -s fd/2 \"$J/dev/stderr\"; ",
    "mkdir \"$J/dev/shm\"; ",
    "mount -t proc proc \"$J/proc\"; ",
    "PATH=\"$PATH:/usr/sbin:/sbin\" exec chroot \"$J\" /bin/sh -c \"cd /submissions && $2\"' ",
    "codeval-jail \"SUBMISSIONS\" 'EVALUATE'"
);

/// How evaluation commands are wrapped before they reach the host shell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IsolationConfig {
    /// Run once on the host before each submission is evaluated.
    pub precommand: Option<String>,
    pub command_template: String,
    /// Bypass the template and run commands directly on the host.
    pub direct_mode: bool,
}

impl Default for IsolationConfig {
    fn default() -> Self {
        IsolationConfig::namespace_jail()
    }
}

impl IsolationConfig {
    pub fn namespace_jail() -> Self {
        IsolationConfig {
            precommand: None,
            command_template: NAMESPACE_JAIL_TEMPLATE.to_string(),
            direct_mode: false,
        }
    }

    /// Runs everything on the host. Only for trusted code.
    pub fn direct() -> Self {
        IsolationConfig {
            precommand: None,
            command_template: String::new(),
            direct_mode: true,
        }
    }

    pub fn with_template(template: impl Into<String>) -> Result<Self, SandboxError> {
        let cfg = IsolationConfig {
            precommand: None,
            command_template: template.into(),
            direct_mode: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Each placeholder must occur exactly once unless in direct mode.
    pub fn validate(&self) -> Result<(), SandboxError> {
        if self.direct_mode {
            return Ok(());
        }
        for placeholder in [SUBMISSIONS_PLACEHOLDER, EVALUATE_PLACEHOLDER] {
            let n = self.command_template.matches(placeholder).count();
            if n != 1 {
                return Err(SandboxError::Config(format!(
                    "command template must contain {placeholder} exactly once (found {n})"
                )));
            }
        }
        Ok(())
    }

    /// Substitutes the workspace directory and the command into the
    /// template. In direct mode the command is returned unchanged.
    pub fn render(&self, submissions_dir: &Path, evaluate_command: &str) -> Result<String, SandboxError> {
        if self.direct_mode {
            return Ok(evaluate_command.to_string());
        }
        self.validate()?;
        Ok(self
            .command_template
            .replace(SUBMISSIONS_PLACEHOLDER, &submissions_dir.to_string_lossy())
            .replace(EVALUATE_PLACEHOLDER, evaluate_command))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOCKER_TEMPLATE: &str =
        "docker run -i -v SUBMISSIONS:/submissions jimg bash -c \"cd /submissions; EVALUATE\"";

    #[test]
    fn renders_docker_template() {
        let cfg = IsolationConfig::with_template(DOCKER_TEMPLATE).unwrap();
        assert_eq!(
            cfg.render(Path::new("/tmp/w1"), "./run_tests").unwrap(),
            "docker run -i -v /tmp/w1:/submissions jimg bash -c \"cd /submissions; ./run_tests\""
        );
    }

    #[test]
    fn direct_mode_passes_through() {
        let cfg = IsolationConfig {
            command_template: "whatever".into(),
            ..IsolationConfig::direct()
        };
        assert_eq!(cfg.render(Path::new("/x"), "./run_tests").unwrap(), "./run_tests");
    }

    #[test]
    fn missing_or_repeated_placeholder_is_rejected() {
        for bad in [
            "docker run -v SUBMISSIONS:/s img",
            "sh -c EVALUATE",
            "SUBMISSIONS SUBMISSIONS EVALUATE",
            "",
        ] {
            assert!(matches!(
                IsolationConfig::with_template(bad),
                Err(SandboxError::Config(_))
            ));
            let cfg = IsolationConfig {
                precommand: None,
                command_template: bad.into(),
                direct_mode: false,
            };
            assert!(cfg.render(Path::new("/w"), "x").is_err());
        }
    }

    #[test]
    fn jail_template_is_valid() {
        IsolationConfig::namespace_jail().validate().unwrap();
        let rendered = IsolationConfig::default()
            .render(Path::new("/tmp/ws"), "sh .codeval/step.sh")
            .unwrap();
        assert!(rendered.ends_with("codeval-jail \"/tmp/ws\" 'sh .codeval/step.sh'"));
    }
}
