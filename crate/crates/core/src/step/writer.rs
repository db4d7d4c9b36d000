use super::{Argument, Record, StepFile};

fn push_text(out: &mut Vec<u8>, s: &str) {
    out.push(b'\'');
    for c in s.chars() {
        if c == '\'' {
            out.extend_from_slice(b"''");
        } else if (c as u32) <= 0xFF {
            out.push(c as u32 as u8);
        } else {
            // Only reachable for text not produced by the tokenizer.
            let mut buf = [0u8; 4];
            out.extend_from_slice(c.encode_utf8(&mut buf).as_bytes());
        }
    }
    out.push(b'\'');
}

pub(crate) fn write_argument(out: &mut Vec<u8>, arg: &Argument) {
    match arg {
        Argument::Number { raw, .. } => out.extend_from_slice(raw.as_bytes()),
        Argument::Text(s) => push_text(out, s),
        Argument::Enum(e) => {
            out.push(b'.');
            out.extend_from_slice(e.as_bytes());
            out.push(b'.');
        }
        Argument::Binary(b) => {
            out.push(b'"');
            out.extend_from_slice(b.as_bytes());
            out.push(b'"');
        }
        Argument::Reference(id) => out.extend_from_slice(format!("#{id}").as_bytes()),
        Argument::List(items) => write_args(out, items),
        Argument::Unset => out.push(b'$'),
        Argument::Inherited => out.push(b'*'),
        Argument::Typed(name, inner) => {
            out.extend_from_slice(name.as_bytes());
            out.push(b'(');
            write_argument(out, inner);
            out.push(b')');
        }
    }
}

fn write_args(out: &mut Vec<u8>, args: &[Argument]) {
    out.push(b'(');
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            out.push(b',');
        }
        write_argument(out, a);
    }
    out.push(b')');
}

fn write_record(out: &mut Vec<u8>, record: &Record) {
    out.extend_from_slice(record.name.as_bytes());
    write_args(out, &record.args);
}

/// Serialize to Part 21 clear text, one instance per line.
pub fn write_step(file: &StepFile) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(b"ISO-10303-21;\nHEADER;\n");
    for rec in &file.header {
        write_record(&mut out, rec);
        out.extend_from_slice(b";\n");
    }
    out.extend_from_slice(b"ENDSEC;\nDATA;\n");
    for inst in file.instances.values() {
        out.extend_from_slice(format!("#{}=", inst.id).as_bytes());
        if inst.is_complex() {
            out.push(b'(');
            for rec in &inst.records {
                write_record(&mut out, rec);
            }
            out.push(b')');
        } else {
            write_record(&mut out, &inst.records[0]);
        }
        out.extend_from_slice(b";\n");
    }
    out.extend_from_slice(b"ENDSEC;\nEND-ISO-10303-21;\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quotes_and_high_bytes_survive() {
        let src = b"ISO-10303-21;HEADER;ENDSEC;DATA;#1=A('it''s caf\xe9',(1.E-3,$,*),.F.);ENDSEC;END-ISO-10303-21;";
        let f = StepFile::parse(src).unwrap();
        let text = write_step(&f);
        assert!(text.windows(5).any(|w| w == b"caf\xe9'"));
        assert_eq!(StepFile::parse(&text).unwrap().instances, f.instances);
    }

    #[test]
    fn complex_instances_written_in_parens() {
        let src = b"ISO-10303-21;HEADER;ENDSEC;DATA;#4=(A(1)B(#4));ENDSEC;END-ISO-10303-21;";
        let f = StepFile::parse(src).unwrap();
        let text = String::from_utf8(write_step(&f)).unwrap();
        assert!(text.contains("#4=(A(1)B(#4));"));
    }
}
