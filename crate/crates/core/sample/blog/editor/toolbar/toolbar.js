export class Toolbar {
  constructor(form, kind) {
    this.kind = kind;
    this.buttons = ["bold", "italic", "link"];
  }
}
