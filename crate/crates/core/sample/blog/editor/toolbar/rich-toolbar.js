export class Toolbar {
  constructor(form, kind) {
    this.kind = kind;
    this.buttons = ["bold", "italic", "underline", "link", "image", "table", "undo", "redo"];
    form.classList.add("rich-toolbar");
  }
}
