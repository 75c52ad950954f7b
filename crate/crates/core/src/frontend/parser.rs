use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::ParseError;
use crate::isa::Word;

/// Parses a complete program.
pub fn parse(text: &str) -> Result<Ast, ParseError> {
    let toks = tokenize(text)?;
    let mut p = Parser { toks, at: 0 };
    let ast = p.program()?;
    p.expect(Tok::Eof)?;
    Ok(ast)
}

struct Parser {
    toks: Vec<Token>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].tok
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].pos
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn eat(&mut self, tok: Tok) -> bool {
        if *self.peek() == tok {
            self.bump();
            true
        } else {
            false
        }
    }

    fn error(&self, expected: &[&str]) -> ParseError {
        let found = self.peek().describe();
        ParseError {
            pos: self.pos(),
            message: format!("unexpected {found}"),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<Token, ParseError> {
        if *self.peek() == tok {
            Ok(self.bump())
        } else {
            Err(self.error(&[tok.spelling()]))
        }
    }

    fn ident(&mut self) -> Result<(String, Pos), ParseError> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                let pos = self.bump().pos;
                Ok((name, pos))
            }
            _ => Err(self.error(&["identifier"])),
        }
    }

    fn number(&mut self) -> Result<Word, ParseError> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Number(text) => {
                self.bump();
                Word::parse_literal(&text).map_err(|_| ParseError {
                    pos,
                    message: format!("number `{text}` does not fit in 32 bits"),
                    expected: Vec::new(),
                })
            }
            _ => Err(self.error(&["number"])),
        }
    }

    fn program(&mut self) -> Result<Ast, ParseError> {
        self.expect(Tok::Vars)?;
        let mut decls = vec![self.decl()?];
        while self.eat(Tok::Comma) {
            decls.push(self.decl()?);
        }
        self.expect(Tok::Semi)?;
        let in_list = if self.eat(Tok::In) { self.name_list()? } else { Vec::new() };
        let out_list = if self.eat(Tok::Out) { self.name_list()? } else { Vec::new() };
        let mut body = Vec::new();
        while *self.peek() != Tok::Eof {
            body.push(self.stmt(&["identifier", "if", "while", "end of input"])?);
        }
        Ok(Ast { decls, in_list, out_list, body })
    }

    fn decl(&mut self) -> Result<Decl, ParseError> {
        let (name, pos) = self.ident()?;
        let kind = if self.eat(Tok::LBracket) {
            let npos = self.pos();
            let n = self.number()?;
            self.expect(Tok::RBracket)?;
            if n.get() == 0 || n.get() > 256 {
                return Err(ParseError {
                    pos: npos,
                    message: format!("array size {} outside 1..=256", n.get()),
                    expected: Vec::new(),
                });
            }
            DeclKind::Array(n.get())
        } else {
            DeclKind::Scalar
        };
        Ok(Decl { name, kind, pos })
    }

    fn name_list(&mut self) -> Result<Vec<IoName>, ParseError> {
        let mut names = Vec::new();
        loop {
            let (name, pos) = self.ident()?;
            names.push(IoName { name, pos });
            if !self.eat(Tok::Comma) {
                break;
            }
        }
        self.expect(Tok::Semi)?;
        Ok(names)
    }

    fn stmt(&mut self, expected: &[&str]) -> Result<Stmt, ParseError> {
        let pos = self.pos();
        match self.peek() {
            Tok::If => {
                self.bump();
                let cond = self.paren_cond()?;
                let then = self.block()?;
                let els = if self.eat(Tok::Else) { self.block()? } else { Vec::new() };
                Ok(Stmt::If { cond, then, els, pos })
            }
            Tok::While => {
                self.bump();
                let cond = self.paren_cond()?;
                let body = self.block()?;
                Ok(Stmt::While { cond, body, pos })
            }
            Tok::Ident(_) => {
                let lhs = self.lvalue()?;
                self.expect(Tok::Assign)?;
                let rhs = self.expr()?;
                self.expect(Tok::Semi)?;
                Ok(Stmt::Assign { lhs, rhs, pos })
            }
            _ => Err(self.error(expected)),
        }
    }

    fn block(&mut self) -> Result<Vec<Stmt>, ParseError> {
        self.expect(Tok::LBrace)?;
        let mut stmts = Vec::new();
        while !self.eat(Tok::RBrace) {
            stmts.push(self.stmt(&["identifier", "if", "while", "}"])?);
        }
        Ok(stmts)
    }

    fn paren_cond(&mut self) -> Result<Cond, ParseError> {
        self.expect(Tok::LParen)?;
        let lhs = self.expr()?;
        let op = match self.peek() {
            Tok::Lt => RelOp::Lt,
            Tok::Le => RelOp::Le,
            Tok::Gt => RelOp::Gt,
            Tok::Ge => RelOp::Ge,
            Tok::EqEq => RelOp::Eq,
            Tok::Ne => RelOp::Ne,
            _ => return Err(self.error(&["+", "-", "<", "<=", ">", ">=", "==", "!="])),
        };
        self.bump();
        let rhs = self.expr()?;
        self.expect(Tok::RParen)?;
        Ok(Cond { lhs, op, rhs })
    }

    fn lvalue(&mut self) -> Result<LValue, ParseError> {
        let (name, pos) = self.ident()?;
        if self.eat(Tok::LBracket) {
            let index = self.expr()?;
            self.expect(Tok::RBracket)?;
            Ok(LValue::Index { array: name, index: Box::new(index), pos })
        } else {
            Ok(LValue::Var { name, pos })
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut acc = self.term()?;
        loop {
            if self.eat(Tok::Plus) {
                acc = Expr::Add(Box::new(acc), Box::new(self.term()?));
            } else if self.eat(Tok::Minus) {
                acc = Expr::Sub(Box::new(acc), Box::new(self.term()?));
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Tok::Number(_) => Ok(Expr::Const(self.number()?)),
            Tok::Minus => {
                self.bump();
                Ok(Expr::Const(-self.number()?))
            }
            Tok::Ident(_) => Ok(Expr::from_lvalue(self.lvalue()?)),
            _ => Err(self.error(&["number", "identifier", "-"])),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_program() {
        let ast = parse("vars x, y; in x; out y; y = x + 5;").unwrap();
        assert_eq!(ast.decls.len(), 2);
        assert_eq!(ast.body.len(), 1);
        let Stmt::Assign { rhs, .. } = &ast.body[0] else { panic!() };
        assert!(matches!(rhs, Expr::Add(_, r) if **r == Expr::Const(Word(5))));
    }

    #[test]
    fn missing_expression_reports_semicolon() {
        let err = parse("vars x; x = ;").unwrap_err();
        assert_eq!(err.pos, Pos { line: 1, col: 13 });
        assert_eq!((err.pos.line, err.pos.col), (1, 13));
        assert!(err.expected.contains(&"number".to_string()));
        assert!(err.message.contains("`;`"));
    }

    #[test]
    fn index_expression() {
        let ast = parse("vars a[4], i, s; in i; out s; s = a[i] + 1;").unwrap();
        assert_eq!(ast.decls[0].kind, DeclKind::Array(4));
        let Stmt::Assign { rhs: Expr::Add(l, _), .. } = &ast.body[0] else { panic!() };
        assert!(matches!(**l, Expr::Index { .. }));
    }

    #[test]
    fn literals_and_comments() {
        let ast = parse("vars x; # decl\nx = -1 + 0x10 - 3; # tail").unwrap();
        let Stmt::Assign { rhs, .. } = &ast.body[0] else { panic!() };
        assert_eq!(rhs.const_value(), Some(Word(12)));
        assert!(parse("vars x; x = 4294967296;").is_err());
        assert!(parse("vars x; x = 12ab;").is_err());
    }

    #[test]
    fn control_flow() {
        let src = "vars x, y; in x; out y;
            if (x <= 3) { y = 1; } else { y = 2; }
            while (x != 0) { x = x - 1; }";
        let ast = parse(src).unwrap();
        assert!(matches!(&ast.body[0], Stmt::If { cond, .. } if cond.op == RelOp::Le));
        assert!(matches!(&ast.body[1], Stmt::While { cond, .. } if cond.op == RelOp::Ne));
    }

    #[test]
    fn error_positions_track_lines() {
        let err = parse("vars x;\n\n  x = 1\n").unwrap_err();
        assert_eq!((err.pos.line, err.pos.col), (4, 1));
        let err = parse("vars a[0];").unwrap_err();
        assert!(err.message.contains("1..=256"));
        let err = parse("vars x; x = 1 $").unwrap_err();
        assert!(err.message.contains('$'));
    }
}
