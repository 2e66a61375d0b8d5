//! Compiler for the C-like task language.
//!
//! Pipeline: [`lexer`] → [`parser`] → [`sema`] (typed IR) → [`optimize`]
//! (optional) → [`codegen`] → bytecode, validated before it is returned.

pub mod ast;
pub mod binary;
mod codegen;
pub mod diag;
pub mod ir;
pub mod lexer;
pub mod optimize;
pub mod parser;
pub mod sema;

pub use binary::{check_compatibility, BinaryError, TaskBinary};
pub use diag::{render_all, Diagnostic, Severity, Span};

use crate::vm::{hostcalls, validate, Bytecode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct CompileOptions {
    pub optimize: bool,
}

impl Default for CompileOptions {
    fn default() -> Self {
        Self { optimize: true }
    }
}

#[derive(Debug, Clone)]
pub struct Compiled {
    pub bytecode: Bytecode,
    /// Warnings; errors abort compilation.
    pub diagnostics: Vec<Diagnostic>,
}

/// Parses source into the untyped syntax tree.
pub fn parse(src: &str) -> Result<ast::Unit, Diagnostic> {
    parser::parse(&lexer::tokenize(src)?)
}

/// Compiles source to a bytecode module.
pub fn compile(src: &str, opts: CompileOptions) -> Result<Compiled, Vec<Diagnostic>> {
    let unit = parse(src).map_err(|d| vec![d])?;
    let mut diags = Vec::new();
    let Some(mut program) = sema::analyze(&unit, &mut diags) else {
        return Err(diags);
    };
    if opts.optimize {
        optimize::optimize(&mut program);
    }
    let bytecode = codegen::generate(&program, opts.optimize);
    let report = validate(&bytecode);
    if !report.is_ok() {
        let msg = report
            .violations
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join("; ");
        diags.push(Diagnostic::error(
            Span { line: 1, col: 1 },
            format!("internal compiler error: {msg}"),
        ));
        return Err(diags);
    }
    Ok(Compiled {
        bytecode,
        diagnostics: diags,
    })
}

/// Compiles a task into a loadable binary stamped with `firmware_hash`.
pub fn compile_task(
    name: &str,
    src: &str,
    firmware_hash: [u8; 16],
    opts: CompileOptions,
) -> Result<(Vec<u8>, Vec<Diagnostic>), Vec<Diagnostic>> {
    let c = compile(src, opts)?;
    let bin = TaskBinary {
        name: name.to_owned(),
        firmware_hash,
        bytecode: c.bytecode.to_bytes(),
    };
    let bytes = bin
        .to_bytes()
        .map_err(|e| vec![Diagnostic::error(Span { line: 1, col: 1 }, e.to_string())])?;
    Ok((bytes, c.diagnostics))
}

/// [`compile_task`] against this build's host interface.
pub fn compile_task_default(
    name: &str,
    src: &str,
) -> Result<(Vec<u8>, Vec<Diagnostic>), Vec<Diagnostic>> {
    compile_task(
        name,
        src,
        hostcalls::firmware_hash(),
        CompileOptions::default(),
    )
}
