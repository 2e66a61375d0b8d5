//! Recursive-descent parser.

use super::ast::*;
use super::diag::{Diagnostic, Span};
use super::lexer::{Tok, Token};

pub fn parse(tokens: &[Token]) -> Result<Unit, Diagnostic> {
    let mut p = Parser {
        toks: tokens,
        pos: 0,
    };
    let mut items = Vec::new();
    while !p.at_eof() {
        items.push(p.item()?);
    }
    Ok(Unit { items })
}

const TYPE_WORDS: &[&str] = &[
    "void", "int", "unsigned", "signed", "uint32_t", "int32_t", "u32", "i32", "double", "f64",
    "iq_pair", "struct", "const", "float", "char", "long", "short",
];

const KEYWORDS: &[&str] = &[
    "if", "else", "while", "do", "for", "break", "continue", "return", "sizeof",
];

struct Parser<'a> {
    toks: &'a [Token],
    pos: usize,
}

type PResult<T> = Result<T, Diagnostic>;

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        let i = (self.pos + n).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    fn at_eof(&self) -> bool {
        matches!(self.peek(), Tok::Eof)
    }

    fn advance(&mut self) -> &Token {
        let t = &self.toks[self.pos];
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == w)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn eat_word(&mut self, w: &str) -> bool {
        if self.is_word(w) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn describe(&self) -> String {
        match self.peek() {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Int { value, .. } => format!("`{value}`"),
            Tok::Float(v) => format!("`{v}`"),
            Tok::Str(_) => "string literal".into(),
            Tok::Punct(p) => format!("`{p}`"),
            Tok::Eof => "end of input".into(),
        }
    }

    fn expect(&mut self, p: &str) -> PResult<()> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            Err(Diagnostic::error(
                self.span(),
                format!("expected `{p}`, found {}", self.describe()),
            ))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek() {
            Tok::Ident(s)
                if !KEYWORDS.contains(&s.as_str()) && !TYPE_WORDS.contains(&s.as_str()) =>
            {
                let s = s.clone();
                self.advance();
                Ok(s)
            }
            _ => Err(Diagnostic::error(
                self.span(),
                format!("expected identifier, found {}", self.describe()),
            )),
        }
    }

    fn is_type_start_at(&self, n: usize) -> bool {
        matches!(self.peek_at(n), Tok::Ident(s) if TYPE_WORDS.contains(&s.as_str()))
    }

    fn is_type_start(&self) -> bool {
        self.is_type_start_at(0)
    }

    /// Base type without pointer stars.
    fn base_type(&mut self) -> PResult<TypeName> {
        let span = self.span();
        while self.eat_word("const") {}
        let Tok::Ident(w) = self.peek().clone() else {
            return Err(Diagnostic::error(
                span,
                format!("expected type, found {}", self.describe()),
            ));
        };
        let ty = match w.as_str() {
            "void" => TypeName::Void,
            "int" | "int32_t" | "i32" => TypeName::I32,
            "uint32_t" | "u32" => TypeName::U32,
            "double" | "f64" => TypeName::F64,
            "iq_pair" => TypeName::IqPair,
            "signed" => {
                self.advance();
                self.eat_word("int");
                return self.trailing_const(TypeName::I32);
            }
            "unsigned" => {
                self.advance();
                self.eat_word("int");
                return self.trailing_const(TypeName::U32);
            }
            "struct" => {
                self.advance();
                if !self.is_word("iq_pair") {
                    return Err(Diagnostic::error(
                        self.span(),
                        "only `struct iq_pair` is supported",
                    ));
                }
                TypeName::IqPair
            }
            "float" => {
                return Err(Diagnostic::error(
                    span,
                    "`float` is not supported; use `double`",
                ))
            }
            "char" | "long" | "short" => {
                return Err(Diagnostic::error(
                    span,
                    format!("type `{w}` is not supported"),
                ))
            }
            _ => {
                return Err(Diagnostic::error(
                    span,
                    format!("expected type, found `{w}`"),
                ))
            }
        };
        self.advance();
        self.trailing_const(ty)
    }

    fn trailing_const(&mut self, ty: TypeName) -> PResult<TypeName> {
        while self.eat_word("const") {}
        Ok(ty)
    }

    fn pointers(&mut self, mut ty: TypeName) -> TypeName {
        while self.eat_punct("*") {
            while self.eat_word("const") {}
            ty = TypeName::Ptr(Box::new(ty));
        }
        ty
    }

    /// Full type name as used in casts and sizeof.
    fn type_name(&mut self) -> PResult<TypeName> {
        let base = self.base_type()?;
        Ok(self.pointers(base))
    }

    fn item(&mut self) -> PResult<Item> {
        let span = self.span();
        let is_const = self.is_word("const");
        let base = self.base_type()?;
        let ty = self.pointers(base);
        let name_span = self.span();
        let name = self.ident()?;
        if !self.is_punct("(") {
            if is_const && self.eat_punct("=") {
                let value = self.assignment()?;
                self.expect(";")?;
                return Ok(Item::Const {
                    name,
                    ty,
                    value,
                    span: name_span,
                });
            }
            return Err(Diagnostic::error(
                name_span,
                "global variables are not supported; use `const` constants or locals",
            ));
        }
        self.expect("(")?;
        let mut params = Vec::new();
        if self.is_word("void") && matches!(self.peek_at(1), Tok::Punct(")")) {
            self.advance();
        }
        if !self.is_punct(")") {
            loop {
                let pspan = self.span();
                let base = self.base_type()?;
                let mut pty = self.pointers(base);
                let pname = self.ident()?;
                if self.eat_punct("[") {
                    if !self.is_punct("]") {
                        self.conditional()?;
                    }
                    self.expect("]")?;
                    pty = TypeName::Ptr(Box::new(pty));
                }
                params.push(Param {
                    name: pname,
                    ty: pty,
                    span: pspan,
                });
                if !self.eat_punct(",") {
                    break;
                }
            }
        }
        self.expect(")")?;
        if self.eat_punct(";") {
            return Ok(Item::Prototype(FunctionDef {
                name,
                ret: ty,
                params,
                body: Vec::new(),
                span,
            }));
        }
        let body = self.block()?;
        Ok(Item::Function(FunctionDef {
            name,
            ret: ty,
            params,
            body,
            span,
        }))
    }

    fn block(&mut self) -> PResult<Vec<Stmt>> {
        self.expect("{")?;
        let mut stmts = Vec::new();
        while !self.is_punct("}") {
            if self.at_eof() {
                return Err(Diagnostic::error(
                    self.span(),
                    "expected `}` before end of input",
                ));
            }
            stmts.push(self.statement()?);
        }
        self.advance();
        Ok(stmts)
    }

    fn statement(&mut self) -> PResult<Stmt> {
        let span = self.span();
        let kind = if self.is_punct("{") {
            StmtKind::Block(self.block()?)
        } else if self.eat_punct(";") {
            StmtKind::Empty
        } else if self.eat_word("if") {
            self.expect("(")?;
            let c = self.expression()?;
            self.expect(")")?;
            let then = Box::new(self.statement()?);
            let els = if self.eat_word("else") {
                Some(Box::new(self.statement()?))
            } else {
                None
            };
            StmtKind::If(c, then, els)
        } else if self.eat_word("while") {
            self.expect("(")?;
            let c = self.expression()?;
            self.expect(")")?;
            StmtKind::While(c, Box::new(self.statement()?))
        } else if self.eat_word("do") {
            let body = Box::new(self.statement()?);
            if !self.eat_word("while") {
                return Err(Diagnostic::error(
                    self.span(),
                    "expected `while` after do body",
                ));
            }
            self.expect("(")?;
            let c = self.expression()?;
            self.expect(")")?;
            self.expect(";")?;
            StmtKind::DoWhile(body, c)
        } else if self.eat_word("for") {
            self.expect("(")?;
            let init = if self.eat_punct(";") {
                None
            } else if self.is_type_start() {
                let s = self.span();
                Some(Box::new(Stmt {
                    kind: self.declaration()?,
                    span: s,
                }))
            } else {
                let s = self.span();
                let e = self.expression()?;
                self.expect(";")?;
                Some(Box::new(Stmt {
                    kind: StmtKind::Expr(e),
                    span: s,
                }))
            };
            let cond = if self.is_punct(";") {
                None
            } else {
                Some(self.expression()?)
            };
            self.expect(";")?;
            let step = if self.is_punct(")") {
                None
            } else {
                Some(self.expression()?)
            };
            self.expect(")")?;
            StmtKind::For(init, cond, step, Box::new(self.statement()?))
        } else if self.eat_word("break") {
            self.expect(";")?;
            StmtKind::Break
        } else if self.eat_word("continue") {
            self.expect(";")?;
            StmtKind::Continue
        } else if self.eat_word("return") {
            let v = if self.is_punct(";") {
                None
            } else {
                Some(self.expression()?)
            };
            self.expect(";")?;
            StmtKind::Return(v)
        } else if self.is_type_start() {
            self.declaration()?
        } else {
            let e = self.expression()?;
            self.expect(";")?;
            StmtKind::Expr(e)
        };
        Ok(Stmt { kind, span })
    }

    /// Declaration including the trailing `;`.
    fn declaration(&mut self) -> PResult<StmtKind> {
        let base = self.base_type()?;
        let mut decls = Vec::new();
        loop {
            let ty = self.pointers(base.clone());
            let span = self.span();
            let name = self.ident()?;
            let mut array_len = None;
            let mut unsized_array = false;
            if self.eat_punct("[") {
                if self.is_punct("]") {
                    unsized_array = true;
                } else {
                    array_len = Some(self.conditional()?);
                }
                self.expect("]")?;
            }
            let init = if self.eat_punct("=") {
                if self.is_punct("{") {
                    let lspan = self.span();
                    self.advance();
                    let mut list = Vec::new();
                    while !self.is_punct("}") {
                        list.push(self.assignment()?);
                        if !self.eat_punct(",") {
                            break;
                        }
                    }
                    self.expect("}")?;
                    Some(Init::List(list, lspan))
                } else {
                    Some(Init::Expr(self.assignment()?))
                }
            } else {
                None
            };
            if unsized_array {
                match &init {
                    Some(Init::List(l, s)) => {
                        array_len = Some(Expr {
                            kind: ExprKind::Int {
                                value: l.len() as u64,
                                unsigned: false,
                            },
                            span: *s,
                        })
                    }
                    _ => {
                        return Err(Diagnostic::error(
                            span,
                            "array without size needs an initializer list",
                        ))
                    }
                }
            }
            decls.push(VarDecl {
                name,
                ty,
                array_len,
                init,
                span,
            });
            if !self.eat_punct(",") {
                break;
            }
        }
        self.expect(";")?;
        Ok(StmtKind::Decl(decls))
    }

    pub fn expression(&mut self) -> PResult<Expr> {
        let mut e = self.assignment()?;
        while self.is_punct(",") {
            let span = self.span();
            self.advance();
            let r = self.assignment()?;
            e = Expr {
                kind: ExprKind::Comma(Box::new(e), Box::new(r)),
                span,
            };
        }
        Ok(e)
    }

    fn assignment(&mut self) -> PResult<Expr> {
        let lhs = self.conditional()?;
        let op = match self.peek() {
            Tok::Punct("=") => None,
            Tok::Punct("+=") => Some(BinOp::Add),
            Tok::Punct("-=") => Some(BinOp::Sub),
            Tok::Punct("*=") => Some(BinOp::Mul),
            Tok::Punct("/=") => Some(BinOp::Div),
            Tok::Punct("%=") => Some(BinOp::Rem),
            Tok::Punct("<<=") => Some(BinOp::Shl),
            Tok::Punct(">>=") => Some(BinOp::Shr),
            Tok::Punct("&=") => Some(BinOp::BitAnd),
            Tok::Punct("|=") => Some(BinOp::BitOr),
            Tok::Punct("^=") => Some(BinOp::BitXor),
            _ => return Ok(lhs),
        };
        let span = self.span();
        self.advance();
        let rhs = self.assignment()?;
        Ok(Expr {
            kind: ExprKind::Assign(op, Box::new(lhs), Box::new(rhs)),
            span,
        })
    }

    fn conditional(&mut self) -> PResult<Expr> {
        let c = self.binary(0)?;
        if !self.is_punct("?") {
            return Ok(c);
        }
        let span = self.span();
        self.advance();
        let a = self.expression()?;
        self.expect(":")?;
        let b = self.conditional()?;
        Ok(Expr {
            kind: ExprKind::Cond(Box::new(c), Box::new(a), Box::new(b)),
            span,
        })
    }

    fn binop(&self) -> Option<(BinOp, u8)> {
        let Tok::Punct(p) = self.peek() else {
            return None;
        };
        Some(match *p {
            "||" => (BinOp::Or, 1),
            "&&" => (BinOp::And, 2),
            "|" => (BinOp::BitOr, 3),
            "^" => (BinOp::BitXor, 4),
            "&" => (BinOp::BitAnd, 5),
            "==" => (BinOp::Eq, 6),
            "!=" => (BinOp::Ne, 6),
            "<" => (BinOp::Lt, 7),
            "<=" => (BinOp::Le, 7),
            ">" => (BinOp::Gt, 7),
            ">=" => (BinOp::Ge, 7),
            "<<" => (BinOp::Shl, 8),
            ">>" => (BinOp::Shr, 8),
            "+" => (BinOp::Add, 9),
            "-" => (BinOp::Sub, 9),
            "*" => (BinOp::Mul, 10),
            "/" => (BinOp::Div, 10),
            "%" => (BinOp::Rem, 10),
            _ => return None,
        })
    }

    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        while let Some((op, prec)) = self.binop() {
            if prec <= min_prec {
                break;
            }
            let span = self.span();
            self.advance();
            let rhs = self.binary(prec)?;
            lhs = Expr {
                kind: ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)),
                span,
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        let span = self.span();
        let op = match self.peek() {
            Tok::Punct("-") => Some(UnOp::Neg),
            Tok::Punct("+") => Some(UnOp::Plus),
            Tok::Punct("~") => Some(UnOp::BitNot),
            Tok::Punct("!") => Some(UnOp::Not),
            Tok::Punct("*") => Some(UnOp::Deref),
            Tok::Punct("&") => Some(UnOp::AddrOf),
            _ => None,
        };
        if let Some(op) = op {
            self.advance();
            let e = self.unary()?;
            return Ok(Expr {
                kind: ExprKind::Unary(op, Box::new(e)),
                span,
            });
        }
        if self.is_punct("++") || self.is_punct("--") {
            let inc = self.is_punct("++");
            self.advance();
            let e = self.unary()?;
            return Ok(Expr {
                kind: ExprKind::IncDec {
                    pre: true,
                    inc,
                    target: Box::new(e),
                },
                span,
            });
        }
        if self.eat_word("sizeof") {
            if self.is_punct("(") && self.is_type_start_at(1) {
                self.advance();
                let ty = self.type_name()?;
                self.expect(")")?;
                return Ok(Expr {
                    kind: ExprKind::SizeofType(ty),
                    span,
                });
            }
            let e = self.unary()?;
            return Ok(Expr {
                kind: ExprKind::SizeofExpr(Box::new(e)),
                span,
            });
        }
        if self.is_punct("(") && self.is_type_start_at(1) {
            self.advance();
            let ty = self.type_name()?;
            self.expect(")")?;
            let e = self.unary()?;
            return Ok(Expr {
                kind: ExprKind::Cast(ty, Box::new(e)),
                span,
            });
        }
        self.postfix()
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut e = self.primary()?;
        loop {
            let span = self.span();
            if self.eat_punct("[") {
                let i = self.expression()?;
                self.expect("]")?;
                e = Expr {
                    kind: ExprKind::Index(Box::new(e), Box::new(i)),
                    span,
                };
            } else if self.is_punct(".") || self.is_punct("->") {
                let arrow = self.is_punct("->");
                self.advance();
                let field = self.ident()?;
                e = Expr {
                    kind: ExprKind::Member {
                        base: Box::new(e),
                        field,
                        arrow,
                    },
                    span,
                };
            } else if self.is_punct("++") || self.is_punct("--") {
                let inc = self.is_punct("++");
                self.advance();
                e = Expr {
                    kind: ExprKind::IncDec {
                        pre: false,
                        inc,
                        target: Box::new(e),
                    },
                    span,
                };
            } else if self.is_punct("(") {
                let ExprKind::Ident(name) = &e.kind else {
                    return Err(Diagnostic::error(
                        span,
                        "only named functions can be called",
                    ));
                };
                let name = name.clone();
                self.advance();
                let mut args = Vec::new();
                if !self.is_punct(")") {
                    loop {
                        args.push(self.assignment()?);
                        if !self.eat_punct(",") {
                            break;
                        }
                    }
                }
                self.expect(")")?;
                e = Expr {
                    kind: ExprKind::Call(name, args),
                    span: e.span,
                };
            } else {
                return Ok(e);
            }
        }
    }

    fn primary(&mut self) -> PResult<Expr> {
        let span = self.span();
        let kind = match self.peek().clone() {
            Tok::Int { value, unsigned } => ExprKind::Int { value, unsigned },
            Tok::Float(v) => ExprKind::Float(v),
            Tok::Str(s) => ExprKind::Str(s),
            Tok::Punct("(") => {
                self.advance();
                let e = self.expression()?;
                self.expect(")")?;
                return Ok(e);
            }
            Tok::Ident(s) if s == "NULL" => ExprKind::Int {
                value: 0,
                unsigned: false,
            },
            Tok::Ident(_) => ExprKind::Ident(self.ident()?),
            _ => {
                return Err(Diagnostic::error(
                    span,
                    format!("expected expression, found {}", self.describe()),
                ))
            }
        };
        if !matches!(kind, ExprKind::Ident(_)) {
            self.advance();
        }
        Ok(Expr { kind, span })
    }
}
