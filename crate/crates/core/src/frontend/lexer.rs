use super::ast::Pos;
use super::ParseError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    /// Unsigned literal text, validated by the parser.
    Number(String),
    Vars,
    In,
    Out,
    If,
    Else,
    While,
    Comma,
    Semi,
    LBracket,
    RBracket,
    LParen,
    RParen,
    LBrace,
    RBrace,
    Assign,
    Plus,
    Minus,
    Lt,
    Le,
    Gt,
    Ge,
    EqEq,
    Ne,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Number(s) => format!("number `{s}`"),
            Tok::Eof => "end of input".to_string(),
            other => format!("`{}`", other.spelling()),
        }
    }

    pub fn spelling(&self) -> &'static str {
        match self {
            Tok::Ident(_) => "identifier",
            Tok::Number(_) => "number",
            Tok::Vars => "vars",
            Tok::In => "in",
            Tok::Out => "out",
            Tok::If => "if",
            Tok::Else => "else",
            Tok::While => "while",
            Tok::Comma => ",",
            Tok::Semi => ";",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::Assign => "=",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Lt => "<",
            Tok::Le => "<=",
            Tok::Gt => ">",
            Tok::Ge => ">=",
            Tok::EqEq => "==",
            Tok::Ne => "!=",
            Tok::Eof => "end of input",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Token {
    pub tok: Tok,
    pub pos: Pos,
}

pub fn tokenize(text: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        let tok = if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            match word.as_str() {
                "vars" => Tok::Vars,
                "in" => Tok::In,
                "out" => Tok::Out,
                "if" => Tok::If,
                "else" => Tok::Else,
                "while" => Tok::While,
                _ => Tok::Ident(word),
            }
        } else if c.is_ascii_digit() {
            // 0x-hex or decimal; trailing identifier chars are swallowed so the
            // parser reports `12ab` as one bad literal
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            Tok::Number(chars[start..i].iter().collect())
        } else {
            let two = |d: char| chars.get(i + 1) == Some(&d);
            let (tok, n) = match c {
                ',' => (Tok::Comma, 1),
                ';' => (Tok::Semi, 1),
                '[' => (Tok::LBracket, 1),
                ']' => (Tok::RBracket, 1),
                '(' => (Tok::LParen, 1),
                ')' => (Tok::RParen, 1),
                '{' => (Tok::LBrace, 1),
                '}' => (Tok::RBrace, 1),
                '+' => (Tok::Plus, 1),
                '-' => (Tok::Minus, 1),
                '<' if two('=') => (Tok::Le, 2),
                '<' => (Tok::Lt, 1),
                '>' if two('=') => (Tok::Ge, 2),
                '>' => (Tok::Gt, 1),
                '=' if two('=') => (Tok::EqEq, 2),
                '=' => (Tok::Assign, 1),
                '!' if two('=') => (Tok::Ne, 2),
                other => {
                    return Err(ParseError {
                        pos,
                        message: format!("unexpected character `{other}`"),
                        expected: Vec::new(),
                    })
                }
            };
            i += n;
            tok
        };
        col += (i - start) as u32;
        out.push(Token { tok, pos });
    }
    out.push(Token { tok: Tok::Eof, pos: Pos { line, col } });
    Ok(out)
}
