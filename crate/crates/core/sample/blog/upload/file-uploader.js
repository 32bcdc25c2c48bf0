export class FileUploader {
  constructor(input) {
    this.input = input;
    this.pending = [];
    input.addEventListener("change", () => this.pending.push(...input.files));
  }

  async flush() {
    for (const file of this.pending.splice(0)) {
      await fetch("/api/uploads", { method: "POST", body: file });
    }
  }
}
